fn main() {
    std::process::exit(musicnn::cli::tagger_main(std::env::args_os()));
}

fn main() {
    std::process::exit(musicnn::cli::musicnn_main(std::env::args_os()));
}

//! Command-line front ends for the `tagger` and `musicnn` binaries.
//!
//! Both entry points return a process exit code: 0 on success, 2 for usage
//! errors reported by the argument parser, 1 for processing errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::arch::{build_model, Backend, Init, Model, ModelConfig};
use crate::dsp::{load_wav, log_mel, patchify};
use crate::error::{Error, Result};
use crate::extractor::{default_embedding_key, extract, feature_csv};
use crate::model_store::{resolve_model, save_model};
use crate::scalar::{NumericMode, Scalar};
use crate::tagger::{compute_taggram, format_listing, top_tags};
use crate::tensor::Tensor;
use crate::trainer::{fit, TrainConfig};
use crate::transfer::{run_pipeline, DatasetManifest, SvmConfig};

/// Top tags of an audio file.
#[derive(Debug, Parser)]
#[command(name = "tagger", version)]
pub struct TaggerArgs {
    /// WAV file to tag.
    pub audio: PathBuf,
    /// Registry model name or path to an .mcn container.
    #[arg(short = 'm', long, default_value = "MTT_musicnn")]
    pub model: String,
    /// Number of tags to list.
    #[arg(long = "topN", default_value_t = 3)]
    pub top_n: usize,
    /// Write the listing to standard output (the default when --save is absent).
    #[arg(long)]
    pub print: bool,
    /// Write the listing to this file.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "musicnn", version, about = "Feature extraction, transfer learning and training")]
pub struct MusicnnArgs {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one intermediate feature of every patch as CSV.
    Extract(ExtractArgs),
    /// Embeddings, PCA and a linear SVM over a labelled manifest.
    Transfer(TransferArgs),
    /// Train a model from a TOML config and save it as .mcn.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub audio: PathBuf,
    #[arg(short = 'm', long, default_value = "MTT_musicnn")]
    pub model: String,
    /// Feature key, e.g. penultimate, cnn2 or pool5.
    #[arg(long)]
    pub feature: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// CSV with header path,label,split.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(short = 'm', long, default_value = "MTT_musicnn")]
    pub model: String,
    /// Embedding feature; defaults to the deepest pre-output feature.
    #[arg(long)]
    pub feature: Option<String>,
    /// PCA components.
    #[arg(long, default_value_t = 128)]
    pub pca: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = SvmConfig::default().reg_strength)]
    pub reg: f64,
    #[arg(long, default_value_t = SvmConfig::default().epochs)]
    pub epochs: usize,
    /// Also write the text report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the test confusion matrix as CSV here.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Architecture presets a training run can start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Musicnn,
    MusicnnBig,
    Vgg,
    ToyMusicnn,
    ToyMusicnnAttention,
    ToyVgg,
}

impl Architecture {
    fn config(self, n_tags: usize) -> ModelConfig {
        match self {
            Architecture::Musicnn => ModelConfig::musicnn(n_tags),
            Architecture::MusicnnBig => ModelConfig::musicnn_big(n_tags),
            Architecture::Vgg => ModelConfig::vgg(n_tags),
            Architecture::ToyMusicnn => ModelConfig::toy_musicnn(Backend::TemporalPooling, n_tags),
            Architecture::ToyMusicnnAttention => ModelConfig::toy_musicnn(Backend::Attention, n_tags),
            Architecture::ToyVgg => ModelConfig::toy_vgg(n_tags),
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub architecture: Architecture,
    pub tags: Vec<String>,
    #[serde(default)]
    pub init_seed: u64,
}

/// Contents of a `train --config` file.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    /// Starting weights: a registry name or an .mcn path.
    pub model: Option<String>,
    /// Fresh model instead of `model`.
    pub preset: Option<Preset>,
    /// CSV with header `path,tags`; tags separated by `;`.
    pub data: PathBuf,
    /// Per-epoch loss CSV.
    pub log: Option<PathBuf>,
    /// Name stored in the saved container.
    pub name: Option<String>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl TrainFile {
    /// Parses TOML, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut f: TrainFile =
            toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        if f.model.is_some() == f.preset.is_some() {
            return Err(Error::ConfigInvalid(
                "exactly one of `model` and `[preset]` must be given".into(),
            ));
        }
        f.data = base.join(&f.data);
        f.log = f.log.map(|p| base.join(p));
        if let Some(m) = &f.model {
            if m.ends_with(".mcn") {
                f.model = Some(base.join(m).to_string_lossy().into_owned());
            }
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

fn run_clap<A: Parser>(argv: impl IntoIterator<Item = OsString>) -> std::result::Result<A, i32> {
    A::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        e.exit_code()
    })
}

fn finish(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn tagger_main(argv: impl IntoIterator<Item = OsString>) -> i32 {
    match run_clap::<TaggerArgs>(argv) {
        Ok(args) => finish(run_tagger(&args)),
        Err(code) => code,
    }
}

pub fn run_tagger(args: &TaggerArgs) -> Result<()> {
    let model = resolve_model::<f32>(&args.model)?;
    let n_tags = model.tag_vocabulary.len();
    if args.top_n == 0 || args.top_n > n_tags {
        return Err(Error::TopNOutOfRange {
            top_n: args.top_n,
            n_tags,
        });
    }
    let taggram = compute_taggram(&args.audio, &model)?;
    let listing = format_listing(&top_tags(&taggram, args.top_n)?);
    if let Some(path) = &args.save {
        write_file(path, &listing)?;
    }
    if args.print || args.save.is_none() {
        print!("{listing}");
    }
    Ok(())
}

pub fn musicnn_main(argv: impl IntoIterator<Item = OsString>) -> i32 {
    match run_clap::<MusicnnArgs>(argv) {
        Ok(args) => finish(match &args.command {
            Command::Extract(a) => run_extract(a),
            Command::Transfer(a) => run_transfer(a),
            Command::Train(a) => run_train(a),
        }),
        Err(code) => code,
    }
}

pub fn run_extract(args: &ExtractArgs) -> Result<()> {
    let model = resolve_model::<f32>(&args.model)?;
    let ex = extract(&args.audio, &model, true)?;
    write_file(&args.out, &feature_csv(&ex.features, &args.feature)?)
}

pub fn run_transfer(args: &TransferArgs) -> Result<()> {
    let model = resolve_model::<f32>(&args.model)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let key = args
        .feature
        .clone()
        .unwrap_or_else(|| default_embedding_key(&model.config).to_string());
    let svm = SvmConfig {
        reg_strength: args.reg,
        epochs: args.epochs,
        seed: args.seed,
    };
    let report = run_pipeline(&manifest, &model, &key, args.pca, &svm)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(path) = &args.report {
        write_file(path, &text)?;
    }
    if let Some(path) = &args.confusion {
        write_file(path, &report.confusion_csv())?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct TrainRow {
    path: String,
    tags: String,
}

/// Every patch of every listed clip, paired with the clip's multi-hot target.
pub fn load_training_set<T: Scalar>(
    path: &Path,
    model: &Model<T>,
) -> Result<Vec<(Tensor<T>, Tensor<T>)>> {
    let bad = |m: String| Error::Manifest(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let vocab = &model.tag_vocabulary;
    let mut data = Vec::new();
    for (i, row) in reader.deserialize::<TrainRow>().enumerate() {
        let row = row.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let mut target = vec![0.0; vocab.len()];
        for tag in row.tags.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let k = vocab
                .iter()
                .position(|v| v == tag)
                .ok_or_else(|| bad(format!("row {}: tag {tag:?} not in the model vocabulary", i + 1)))?;
            target[k] = 1.0;
        }
        let target = Tensor::from_f64(&[vocab.len()], &target)?;
        let wave = load_wav::<T>(base.join(&row.path))?;
        for patch in patchify(&log_mel(&wave, &model.config.dsp)?)? {
            data.push((patch, target.clone()));
        }
    }
    if data.is_empty() {
        return Err(bad("no training clips".into()));
    }
    Ok(data)
}

fn train_in<T: Scalar>(file: &TrainFile) -> Result<(Model<f32>, String)> {
    let mut model: Model<T> = match (&file.model, &file.preset) {
        (Some(name), _) => resolve_model(name)?,
        (None, Some(p)) => build_model(
            &p.architecture.config(p.tags.len()),
            Init::SeededRandom(p.init_seed),
            p.tags.clone(),
        )?,
        (None, None) => unreachable!("checked when parsing"),
    };
    if let Some(name) = &file.name {
        model.name = name.clone();
    }
    let data = load_training_set(&file.data, &model)?;
    let log = fit(&mut model, &data, &file.train)?;
    Ok((model.cast(), log.to_csv()))
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    let file = TrainFile::load(&args.config)?;
    let (model, log) = match file.train.numeric_mode {
        NumericMode::F32 => train_in::<f32>(&file)?,
        NumericMode::F64 => train_in::<f64>(&file)?,
    };
    save_model(&model, &args.out)?;
    match &file.log {
        Some(path) => write_file(path, &log),
        None => {
            print!("{log}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_file_requires_one_model_source() {
        let base = Path::new("/cfg");
        let both = "model = \"MTT_musicnn\"\ndata = \"d.csv\"\n[preset]\narchitecture = \"toy_vgg\"\ntags = [\"a\"]\n";
        assert!(TrainFile::parse(both, base).is_err());
        assert!(TrainFile::parse("data = \"d.csv\"\n", base).is_err());
        let ok = TrainFile::parse(
            "model = \"MTT_musicnn\"\ndata = \"d.csv\"\n[train]\nepochs = 3\n",
            base,
        )
        .unwrap();
        assert_eq!(ok.data, PathBuf::from("/cfg/d.csv"));
        assert_eq!(ok.train.epochs, 3);
        assert_eq!(ok.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn unknown_train_keys_rejected() {
        let text = "model = \"MTT_musicnn\"\ndata = \"d.csv\"\n[train]\nlr = 0.1\n";
        assert!(TrainFile::parse(text, Path::new(".")).is_err());
    }

    #[test]
    fn tagger_flags_parse() {
        let a = TaggerArgs::try_parse_from(["tagger", "x.wav", "-m", "MTT_vgg", "--topN", "5"]).unwrap();
        assert_eq!((a.model.as_str(), a.top_n, a.print), ("MTT_vgg", 5, false));
        let d = TaggerArgs::try_parse_from(["tagger", "x.wav"]).unwrap();
        assert_eq!((d.model.as_str(), d.top_n), ("MTT_musicnn", 3));
        assert!(TaggerArgs::try_parse_from(["tagger", "x.wav", "--topN", "many"]).is_err());
    }
}

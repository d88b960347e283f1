//! The ten acceptance criteria. Runs without the libtest harness so each
//! criterion prints its own pass/fail line; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::oracle;
use common::{as_f64, rel_err};
use musicnn::arch::{forward, Backend, BnMode, Model, ModelConfig};
use musicnn::dsp::{
    log_mel, mel_center_frequencies, patchify, stft_magnitude, DspConfig, Waveform,
};
use musicnn::extractor::extract_waveform;
use musicnn::model_store::{
    decode_model, encode_model, load_model, registry_get, registry_model, resolve_model,
    save_model, MODEL_NAMES, MSD_TAGS, MTT_TAGS,
};
use musicnn::rng::SplitMix64;
use musicnn::tagger::{compute_taggram, format_listing, top_tags};
use musicnn::tensor::{conv2d, dense, pool_max, softmax_over_axis};
use musicnn::trainer::{fit, model_grad_check, TrainConfig};
use musicnn::transfer::{pr_auc, roc_auc, run_pipeline, DatasetManifest, SvmConfig};
use musicnn::{Error, Scalar, Tensor};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for (label, cfg) in common::toy_configs(4) {
        let model: Model<f64> = common::seeded(&cfg, 11);
        let (x, t) = common::unzip(&common::random_set(&cfg, 1, 3));
        let report = ok(model_grad_check(&model, &x, &t, BnMode::Running, 1e-5, 1e-4), label)?;
        ensure!(
            report.passed(),
            "{label}: max relative error {:.2e} over {} tensors",
            report.max_rel_error(),
            report.tensors.len()
        );
        worst.push(format!("{label} {:.1e}", report.max_rel_error()));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s, limit 60s");
    Ok(format!("max rel error: {}", worst.join(", ")))
}

fn round<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

fn normals(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Library op on `T` against the f64 oracle evaluated on the same (rounded)
/// inputs. Returns the larger error of the f64 and f32 runs, per precision.
struct Sweep {
    f64_err: f64,
    f32_err: f64,
}

impl Sweep {
    fn new() -> Self {
        Self { f64_err: 0.0, f32_err: 0.0 }
    }

    fn record(&mut self, e64: f64, e32: f64) {
        self.f64_err = self.f64_err.max(e64);
        self.f32_err = self.f32_err.max(e32);
    }
}

fn conv_case<T: Scalar>(rng: &mut SplitMix64, column: bool) -> f64 {
    let (ci, co) = (1 + rng.below(3), 1 + rng.below(3));
    let (h, w) = (1 + rng.below(8), if column { 1 + rng.below(3) } else { 1 + rng.below(8) });
    let ph = rng.below(3);
    let pw = if column { 0 } else { rng.below(3) };
    let kh = 1 + rng.below(h + 2 * ph);
    let kw = if column { 1 } else { 1 + rng.below(w + 2 * pw) };
    let x: Vec<T> = round(&normals(rng, ci * h * w));
    let k: Vec<T> = round(&normals(rng, co * ci * kh * kw));
    let b: Option<Vec<T>> = (rng.below(2) == 1).then(|| round(&normals(rng, co)));
    let xt = Tensor::new(vec![ci, h, w], x.clone()).unwrap();
    let kt = Tensor::new(vec![co, ci, kh, kw], k.clone()).unwrap();
    let bt = b.as_ref().map(|b| Tensor::from_vec(b.clone()));
    let got = conv2d(&xt, &kt, bt.as_ref(), (ph, pw)).unwrap();
    let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    let bf = b.as_ref().map(|b| f(b));
    let (want, shape) =
        oracle::conv2d(&f(&x), (ci, h, w), &f(&k), (co, kh, kw), bf.as_deref(), (ph, pw));
    assert_eq!(got.shape(), [shape.0, shape.1, shape.2]);
    rel_err(&as_f64(&got), &want)
}

fn dense_case<T: Scalar>(rng: &mut SplitMix64) -> f64 {
    let (n, m) = (1 + rng.below(40), 1 + rng.below(20));
    let x: Vec<T> = round(&normals(rng, n));
    let w: Vec<T> = round(&normals(rng, m * n));
    let b: Vec<T> = round(&normals(rng, m));
    let with_bias = rng.below(2) == 1;
    let bt = Tensor::from_vec(b.clone());
    let got = dense(
        &Tensor::from_vec(x.clone()),
        &Tensor::new(vec![m, n], w.clone()).unwrap(),
        with_bias.then_some(&bt),
    )
    .unwrap();
    let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    let bf = f(&b);
    let want = oracle::dense(&f(&x), &f(&w), with_bias.then_some(bf.as_slice()));
    rel_err(&as_f64(&got), &want)
}

fn pool_case<T: Scalar>(rng: &mut SplitMix64) -> f64 {
    let c = 1 + rng.below(3);
    let (wh, ww) = (1 + rng.below(4), 1 + rng.below(4));
    let (h, w) = (wh * (1 + rng.below(5)), ww * (1 + rng.below(5)));
    let x: Vec<T> = round(&normals(rng, c * h * w));
    let (got, _) = pool_max(&Tensor::new(vec![c, h, w], x.clone()).unwrap(), wh, ww).unwrap();
    let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    rel_err(&as_f64(&got), &oracle::pool_max(&xf, (c, h, w), (wh, ww)))
}

fn softmax_case<T: Scalar>(rng: &mut SplitMix64) -> f64 {
    let ndim = 1 + rng.below(3);
    let shape: Vec<usize> = (0..ndim).map(|_| 1 + rng.below(7)).collect();
    let axis = rng.below(ndim);
    let n: usize = shape.iter().product();
    let x: Vec<T> = round(&normals(rng, n).iter().map(|v| 3.0 * v).collect::<Vec<_>>());
    let got = softmax_over_axis(&Tensor::new(shape.clone(), x.clone()).unwrap(), axis).unwrap();
    let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    rel_err(&as_f64(&got), &oracle::softmax(&xf, &shape, axis))
}

fn stft_case<T: Scalar>(rng: &mut SplitMix64) -> f64 {
    let n_fft = 2 + rng.below(63);
    let hop = 1 + rng.below(n_fft);
    let len = n_fft + rng.below(200);
    let x: Vec<T> = round(&normals(rng, len));
    let got = stft_magnitude(&Waveform::new(x.clone(), 8_000), n_fft, hop).unwrap();
    let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let want: Vec<f64> = oracle::stft_magnitude(&xf, n_fft, hop).concat();
    rel_err(&as_f64(&got), &want)
}

fn oracle_equivalence() -> Outcome {
    const CASES: usize = 120;
    let mut rng = SplitMix64::new(2024);
    let mut sweeps: Vec<(&str, Sweep, f64, f64)> = Vec::new();
    let mut run = |name: &'static str, tol64: f64, case: &mut dyn FnMut(&mut SplitMix64) -> (f64, f64)| {
        let mut s = Sweep::new();
        for _ in 0..CASES {
            let (a, b) = case(&mut rng);
            s.record(a, b);
        }
        sweeps.push((name, s, tol64, 1e-6));
    };
    run("conv2d", 1e-10, &mut |r| {
        let column = r.below(3) == 0;
        let mut r32 = r.clone();
        let e64 = conv_case::<f64>(r, column);
        (e64, conv_case::<f32>(&mut r32, column))
    });
    run("dense", 1e-10, &mut |r| {
        let mut r32 = r.clone();
        (dense_case::<f64>(r), dense_case::<f32>(&mut r32))
    });
    run("max pool", 1e-6, &mut |r| {
        let mut r32 = r.clone();
        (pool_case::<f64>(r), pool_case::<f32>(&mut r32))
    });
    run("softmax", 1e-6, &mut |r| {
        let mut r32 = r.clone();
        (softmax_case::<f64>(r), softmax_case::<f32>(&mut r32))
    });
    run("stft", 1e-6, &mut |r| {
        let mut r32 = r.clone();
        (stft_case::<f64>(r), stft_case::<f32>(&mut r32))
    });
    let mut parts = Vec::new();
    for (name, s, tol64, tol32) in &sweeps {
        ensure!(s.f64_err <= *tol64, "{name} f64 error {:.2e} > {tol64:e}", s.f64_err);
        ensure!(s.f32_err <= *tol32, "{name} f32 error {:.2e} > {tol32:e}", s.f32_err);
        parts.push(format!("{name} {:.0e}/{:.0e}", s.f64_err, s.f32_err));
    }
    Ok(format!("{CASES} shapes each, f64/f32 max rel error: {}", parts.join(", ")))
}

fn metric_oracles() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let mut worst = 0.0f64;
    let instances = 1500;
    for i in 0..instances {
        let n = 2 + rng.below(11);
        let tied = i % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| if tied { rng.below(4) as f64 / 4.0 } else { rng.normal() })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.below(2) == 1).collect();
        labels[rng.below(n)] = true;
        let pr = ok(pr_auc(&scores, &labels), "pr_auc")?;
        worst = worst.max((pr - oracle::pr_auc(&scores, &labels)).abs());
        if labels.iter().any(|&l| !l) {
            let roc = ok(roc_auc(&scores, &labels), "roc_auc")?;
            worst = worst.max((roc - oracle::roc_auc(&scores, &labels)).abs());
        }
    }
    ensure!(worst <= 1e-12, "max deviation from enumeration {worst:e}");
    let roc = ok(roc_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]), "roc_auc")?;
    ensure!((roc - 0.75).abs() <= 1e-12, "worked ROC example gave {roc}");
    let pr = ok(pr_auc(&[0.9, 0.8, 0.7], &[false, true, true]), "pr_auc")?;
    ensure!((pr - 7.0 / 12.0).abs() <= 1e-12, "worked PR example gave {pr}");
    Ok(format!(
        "{instances} instances (n <= 12) within {worst:.0e}; worked examples {roc} and {pr:.5}"
    ))
}

fn memorize(seed: u64) -> Result<Vec<f64>, String> {
    let mut model: Model<f32> = common::toy(Backend::TemporalPooling, 4, seed);
    let data = common::random_set(&model.config, 10, seed + 100);
    let cfg = TrainConfig {
        learning_rate: 0.03,
        batch_size: 10,
        epochs: 200,
        seed,
        ..TrainConfig::default()
    };
    Ok(ok(fit(&mut model, &data, &cfg), "fit")?.epoch_losses)
}

fn memorization() -> Outcome {
    let start = Instant::now();
    let mut finals = Vec::new();
    for seed in [1, 2, 3] {
        let log = memorize(seed)?;
        let last = *log.last().unwrap();
        ensure!(log.len() == 200, "seed {seed}: {} epochs logged", log.len());
        ensure!(last < 0.05, "seed {seed}: final BCE {last}");
        finals.push(format!("{last:.4}"));
    }
    ensure!(memorize(1)? == memorize(1)?, "seed 1 produced two different training logs");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "took {secs:.0}s, limit 300s");
    Ok(format!("final BCE {} for seeds 1..3; seed 1 repeat identical", finals.join(", ")))
}

fn attention_mechanism() -> Outcome {
    let mut model: Model<f32> = common::toy(Backend::Attention, 1, 0);
    let data = common::frame0_set(&model.config, 64, 100);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 16,
        epochs: 100,
        seed: 0,
        ..TrainConfig::default()
    };
    ok(fit(&mut model, &data, &cfg), "fit")?;
    let mut w0 = 0.0;
    for (x, _) in &data {
        let trace = ok(forward(x, &model), "forward")?;
        w0 += trace.get("attention_weights").unwrap().data()[0] as f64;
    }
    w0 /= data.len() as f64;
    let uniform = 1.0 / model.config.dsp.patch_frames as f64;
    ensure!(w0 > uniform, "mean attention_weights[0] {w0:.4} <= 1/T {uniform:.4}");
    Ok(format!("mean attention_weights[0] {w0:.3} > 1/T {uniform:.3}"))
}

fn contract_conformance() -> Outcome {
    let text = common::paper_text();
    let musicnn_keys =
        common::paper_verb_list(&text, "for the \\textit{musicnn} models, you can extract", "features");
    let vgg_keys = common::paper_verb_list(&text, "For the \\textit{vgg} models, you can extract", "features");
    let names = common::paper_verb_list(&text, "The following models are available:", ". The");
    let mtt = common::paper_vocabulary(&text, "MagnaTagATune 50-tags vocabulary:");
    let msd = common::paper_vocabulary(&text, "Million Song Dataset 50-tags vocabulary:");
    ensure!(musicnn_keys.len() == 8 && vgg_keys.len() == 5, "feature lists not found in paper.md");

    ensure!(MODEL_NAMES.to_vec() == names, "registry names {MODEL_NAMES:?} vs {names:?}");
    ensure!(MTT_TAGS.to_vec() == mtt, "MTT vocabulary differs from paper.md");
    ensure!(MSD_TAGS.to_vec() == msd, "MSD vocabulary differs from paper.md");
    ensure!(mtt.len() == 50 && msd.len() == 50, "vocabularies are not 50 tags");
    ensure!(
        matches!(resolve_model::<f32>("MTT_musicnn_huge"), Err(Error::UnknownModel { .. })),
        "unknown name was not rejected"
    );

    let w = common::sine(330.0, 0.5, 0.0, 50_000, 16_000);
    let wave: Waveform<f32> = Waveform::new(w.samples.iter().map(|&v| v as f32).collect(), w.sample_rate);
    for name in MODEL_NAMES {
        let (_, vocab) = ok(registry_get(name), name)?;
        let expected_vocab = if name.starts_with("MTT") { &mtt } else { &msd };
        ensure!(&vocab == expected_vocab, "{name} carries the wrong vocabulary");
        let model: Model<f32> = ok(registry_model(name), name)?;
        let ex = ok(extract_waveform(&wave, &model, true), name)?;
        let mut keys: Vec<String> = ex.features.keys().iter().map(|s| s.to_string()).collect();
        let mut want = if name.ends_with("vgg") { vgg_keys.clone() } else { musicnn_keys.clone() };
        keys.sort();
        want.sort();
        ensure!(keys == want, "{name} extractor keys {keys:?}, expected {want:?}");
        ensure!(ex.tags == vocab, "{name} extraction tags differ from the vocabulary");
    }
    Ok(format!(
        "5 registry models, 2x50-tag vocabularies and both feature key sets match paper.md"
    ))
}

fn listing_line_ok(line: &str, vocab: &[&str]) -> bool {
    let Some((tag, score)) = line.split_once('\t') else { return false };
    let Some((int, frac)) = score.split_once('.') else { return false };
    vocab.contains(&tag)
        && !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.len() == 6
        && frac.bytes().all(|b| b.is_ascii_digit())
}

fn cli_conformance() -> Outcome {
    let dir = ok(tempfile::tempdir(), "tempdir")?;
    let wav = common::tagger_fixture(dir.path());
    let tagger = env!("CARGO_BIN_EXE_tagger");
    let run = |args: &[&str]| Command::new(tagger).args(args).output().map_err(|e| e.to_string());
    let wav_s = wav.to_str().unwrap();

    let out = run(&[wav_s, "--model", "MTT_musicnn", "--topN", "10", "--print"])?;
    ensure!(out.status.code() == Some(0), "print form exited {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = stdout.split_terminator('\n').collect();
    ensure!(lines.len() == 10 && stdout.ends_with('\n'), "print form wrote {} lines", lines.len());
    ensure!(lines.iter().all(|l| listing_line_ok(l, &MTT_TAGS)), "malformed listing:\n{stdout}");
    let model: Model<f32> = ok(registry_model("MTT_musicnn"), "registry")?;
    let expected = format_listing(&ok(top_tags(&ok(compute_taggram(&wav, &model), "taggram")?, 10), "top_tags")?);
    ensure!(stdout == expected, "CLI listing differs from the library listing");

    let saved = dir.path().join("out.tags");
    let out = run(&[wav_s, "-m", "MTT_vgg", "--topN", "5", "--save", saved.to_str().unwrap()])?;
    ensure!(out.status.code() == Some(0), "save form exited {:?}", out.status.code());
    ensure!(out.stdout.is_empty(), "save form without --print wrote to stdout");
    let file = ok(std::fs::read_to_string(&saved), "read out.tags")?;
    let lines: Vec<&str> = file.split_terminator('\n').collect();
    ensure!(lines.len() == 5 && file.ends_with('\n'), "saved listing has {} lines", lines.len());
    ensure!(lines.iter().all(|l| listing_line_ok(l, &MTT_TAGS)), "malformed saved listing:\n{file}");

    let both = dir.path().join("both.tags");
    let out = run(&[wav_s, "-m", "MTT_vgg", "--topN", "5", "--print", "--save", both.to_str().unwrap()])?;
    ensure!(out.status.code() == Some(0), "dual-sink run exited {:?}", out.status.code());
    let both_file = ok(std::fs::read(&both), "read both.tags")?;
    ensure!(out.stdout == both_file && both_file == file.as_bytes(), "sinks disagree");

    let missing = dir.path().join("missing.wav");
    let out = run(&[missing.to_str().unwrap()])?;
    ensure!(out.status.code() == Some(1), "missing file exited {:?}", out.status.code());
    ensure!(!out.stderr.is_empty() && out.stdout.is_empty(), "missing file produced no diagnostic");
    for bad in [&[wav_s, "--topN", "0"][..], &[wav_s, "--model", "nope"]] {
        let out = run(bad)?;
        ensure!(out.status.code() == Some(1), "{bad:?} exited {:?}", out.status.code());
    }
    for bad in [&[wav_s, "--topN", "ten"][..], &[wav_s, "--bogus"], &[]] {
        let out = run(bad)?;
        ensure!(out.status.code() == Some(2), "{bad:?} exited {:?}", out.status.code());
    }
    Ok("both invocation shapes exit 0 with bit-exact listings; error exits 1 and 2".into())
}

/// Rewrites the manifest text of a container, fixing up its length prefix.
fn edit_manifest(bytes: &[u8], edit: impl Fn(&str) -> String) -> Vec<u8> {
    let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let text = std::str::from_utf8(&bytes[12..12 + len]).unwrap();
    let new = edit(text);
    let mut out = bytes[..4].to_vec();
    out.extend_from_slice(&(new.len() as u64).to_le_bytes());
    out.extend_from_slice(new.as_bytes());
    out.extend_from_slice(&bytes[12 + len..]);
    out
}

fn bit_identical<T: Scalar>(a: &Model<T>, b: &Model<T>, patch: &Tensor<T>) -> Result<(), String> {
    let (ta, tb) = (ok(forward(patch, a), "forward")?, ok(forward(patch, b), "forward")?);
    for key in ta.keys() {
        let (x, y) = (ta.get(key).unwrap(), tb.get(key).unwrap());
        let same = x.shape() == y.shape()
            && x.data().iter().zip(y.data()).all(|(p, q)| p.as_f64().to_bits() == q.as_f64().to_bits());
        ensure!(same, "{} forward key {key} differs after reload", a.name);
    }
    Ok(())
}

fn round_trip() -> Outcome {
    let dir = ok(tempfile::tempdir(), "tempdir")?;
    let mut rng = SplitMix64::new(5);
    let mut checked = Vec::new();
    for (label, cfg) in common::toy_configs(3) {
        let mut model: Model<f32> = common::seeded(&cfg, 21);
        // move the running statistics off their defaults
        let data = common::random_set(&cfg, 4, 1);
        ok(fit(&mut model, &data, &TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::default() }), "fit")?;
        let path = dir.path().join(format!("{}.mcn", label.replace(' ', "_")));
        ok(save_model(&model, &path), "save")?;
        let back: Model<f32> = ok(load_model(&path), "load")?;
        bit_identical(&model, &back, &common::random_patch(&cfg, &mut rng))?;
        checked.push(label);
    }
    let big: Model<f64> = ok(registry_model("MTT_musicnn"), "registry")?;
    let back: Model<f64> = ok(decode_model(&ok(encode_model(&big), "encode")?), "decode")?;
    bit_identical(&big, &back, &common::random_patch(&big.config, &mut rng))?;
    checked.push("MTT_musicnn (64-bit)");

    let bytes = ok(encode_model(&common::seeded::<f32>(&ModelConfig::toy_vgg(3), 4)), "encode")?;
    let truncated = decode_model::<f32>(&bytes[..bytes.len() - 3]);
    ensure!(
        matches!(truncated, Err(Error::PayloadTruncated { .. })),
        "truncated payload gave {truncated:?}"
    );
    let swapped = edit_manifest(&bytes, |text| {
        let line = text
            .lines()
            .find(|l| {
                l.starts_with("tensor ") && {
                    let dims: Vec<&str> = l.split(' ').nth(3).unwrap().split(',').collect();
                    dims.len() > 1 && dims.first() != dims.last()
                }
            })
            .expect("a tensor with two distinct extents");
        let f: Vec<&str> = line.split(' ').collect();
        let mut dims: Vec<&str> = f[3].split(',').collect();
        dims.reverse();
        let tampered = format!("{} {} {} {} {} {}", f[0], f[1], f[2], dims.join(","), f[4], f[5]);
        text.replacen(line, &tampered, 1)
    });
    match decode_model::<f32>(&swapped) {
        Err(Error::ShapeMismatch(msg)) if msg.contains("block") => {}
        other => return Err(format!("shape tamper gave {other:?}")),
    }
    Ok(format!(
        "bit-identical forward after reload for {}; truncation and shape tamper rejected",
        checked.join(", ")
    ))
}

fn pipeline_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = ok(tempfile::tempdir(), "tempdir")?;
    let manifest_path = common::two_genre_manifest(dir.path(), 10, 4, 8);
    let model_path = dir.path().join("toy.mcn");
    let toy: Model<f32> = common::toy(Backend::TemporalPooling, 4, 0);
    ok(save_model(&toy.with_name("toy_musicnn"), &model_path), "save")?;
    let model: Model<f32> = ok(resolve_model(model_path.to_str().unwrap()), "resolve")?;
    let manifest = ok(DatasetManifest::load(&manifest_path), "manifest")?;
    let mut accs = Vec::new();
    for seed in [0, 1, 2] {
        let svm = SvmConfig { seed, ..SvmConfig::default() };
        let report = ok(run_pipeline(&manifest, &model, "penultimate", 128, &svm), "pipeline")?;
        ensure!(
            report.test_accuracy >= 0.9,
            "seed {seed}: test accuracy {}",
            report.test_accuracy
        );
        ensure!(!report.warnings.is_empty() && report.pca_used < 128, "k was not clamped");
        if seed == 0 {
            let again = ok(run_pipeline(&manifest, &model, "penultimate", 128, &svm), "pipeline")?;
            ensure!(
                again.to_text() == report.to_text() && again.confusion_csv() == report.confusion_csv(),
                "seed 0 reports differ between runs"
            );
        }
        accs.push(format!("{:.3}", report.test_accuracy));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.0}s, limit 120s");
    Ok(format!("test accuracy {} for seeds 0..2, repeat run identical, {secs:.1}s", accs.join(", ")))
}

fn mean_bands(w: &Waveform<f64>, cfg: &DspConfig) -> Vec<f64> {
    let mel = log_mel(w, cfg).unwrap();
    let n = mel.n_mels();
    let mut mean = vec![0.0; n];
    for row in mel.values.data().chunks_exact(n) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean
}

fn dsp_invariants() -> Outcome {
    let cfg = DspConfig::default();
    let silence: Waveform<f64> = Waveform::new(vec![0.0; 40_000], 16_000);
    let mel = ok(log_mel(&silence, &cfg), "log_mel")?;
    let floor = cfg.log_offset.ln();
    ensure!(mel.values.data().iter().all(|&v| v == floor), "silence is not ln(log_offset) everywhere");
    let silence32: Waveform<f32> = Waveform::new(vec![0.0; 40_000], 16_000);
    let floor32 = (cfg.log_offset as f32).ln();
    ensure!(
        ok(log_mel(&silence32, &cfg), "log_mel")?.values.data().iter().all(|&v| v == floor32),
        "32-bit silence is not ln(log_offset) everywhere"
    );

    let centers = mel_center_frequencies(&cfg);
    let mut rng = SplitMix64::new(31);
    let tones = 60;
    for _ in 0..tones {
        let m = rng.below(cfg.n_mels);
        let lo = if m == 0 { centers[0] } else { centers[m] - centers[m - 1] };
        let hi = if m + 1 == centers.len() { cfg.fmax - centers[m] } else { centers[m + 1] - centers[m] };
        let offset = rng.uniform(-0.15, 0.15);
        let f = centers[m] + offset * if offset < 0.0 { lo } else { hi };
        let wave = common::sine(f, rng.uniform(0.1, 0.9), rng.uniform(0.0, 6.0), 16_000, 16_000);
        let mean = mean_bands(&wave, &cfg);
        let argmax = (0..mean.len()).fold(0, |b, i| if mean[i] > mean[b] { i } else { b });
        let nearest = (0..centers.len())
            .fold(0, |b, i| if (centers[i] - f).abs() < (centers[b] - f).abs() { i } else { b });
        ensure!(argmax == nearest, "{f:.1} Hz tone peaks in band {argmax}, nearest centre is {nearest}");
    }

    let lengths = 50;
    for i in 0..lengths {
        let rate = [16_000, 22_050, 44_100][i % 3];
        let dsp = DspConfig {
            patch_hop_frames: [187, 93, 50][rng.below(3)],
            ..cfg.clone()
        };
        let len = 20_000 + rng.below(200_000);
        let wave: Waveform<f64> = Waveform::new(vec![0.0; len], rate);
        let resampled = len * 16_000 / rate as usize;
        let frames = (resampled - dsp.fft_size) / dsp.hop_size + 1;
        let mel = ok(log_mel(&wave, &dsp), "log_mel")?;
        ensure!(mel.frames() == frames, "{len} samples at {rate} Hz gave {} frames, want {frames}", mel.frames());
        match patchify(&mel) {
            Ok(p) => {
                let want = (frames - dsp.patch_frames) / dsp.patch_hop_frames + 1;
                ensure!(frames >= dsp.patch_frames && p.len() == want, "{frames} frames gave {} patches", p.len());
            }
            Err(Error::AudioTooShort { .. }) => {
                ensure!(frames < dsp.patch_frames, "{frames} frames rejected as too short")
            }
            Err(e) => return Err(format!("patchify: {e}")),
        }
    }
    Ok(format!(
        "silence exact in both precisions; {tones} tones peak at the nearest centre; {lengths} lengths counted exactly"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient integrity", gradient_integrity),
        ("oracle equivalence", oracle_equivalence),
        ("metric oracles", metric_oracles),
        ("memorization", memorization),
        ("attention mechanism", attention_mechanism),
        ("contract conformance", contract_conformance),
        ("CLI conformance", cli_conformance),
        ("round-trip", round_trip),
        ("pipeline end-to-end", pipeline_end_to_end),
        ("DSP invariants", dsp_invariants),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {status} {name} [{secs:.1}s]: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! `.mcn` weight container: magic, manifest length, manifest, payload.
//!
//! ```text
//! bytes 0..4    "MCN1"
//! bytes 4..12   manifest length, u64 little-endian
//! manifest      UTF-8 lines "key value"
//! payload       f32 little-endian tensor data, in record order
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::arch::{build_model, Backend, Family, Init, Model, ModelConfig};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MCN1";
const HEADER_LEN: usize = 12;

/// One `tensor` line of the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub nbytes: usize,
}

fn join<X: ToString>(xs: &[X]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn config_lines(cfg: &ModelConfig) -> Vec<String> {
    let d = &cfg.dsp;
    let pools: Vec<String> = cfg
        .vgg_pool_shapes
        .iter()
        .map(|(h, w)| format!("{h}x{w}"))
        .collect();
    vec![
        format!("family {}", cfg.family.as_str()),
        format!("backend {}", cfg.backend.as_str()),
        format!("n_tags {}", cfg.n_tags),
        format!("sample_rate {}", d.sample_rate),
        format!("fft_size {}", d.fft_size),
        format!("hop_size {}", d.hop_size),
        format!("n_mels {}", d.n_mels),
        format!("fmin {}", d.fmin),
        format!("fmax {}", d.fmax),
        format!("log_offset {}", d.log_offset),
        format!("patch_frames {}", d.patch_frames),
        format!("patch_hop_frames {}", d.patch_hop_frames),
        format!("timbral_filter_heights {}", join(&cfg.timbral_filter_heights)),
        format!("timbral_channels {}", cfg.timbral_channels),
        format!("temporal_filter_lengths {}", join(&cfg.temporal_filter_lengths)),
        format!("temporal_channels {}", cfg.temporal_channels),
        format!("midend_channels {}", cfg.midend_channels),
        format!("midend_kernel {}", cfg.midend_kernel),
        format!("penultimate_units {}", cfg.penultimate_units),
        format!("vgg_block_channels {}", join(&cfg.vgg_block_channels)),
        format!("vgg_pool_shapes {}", pools.join(" ")),
        format!("vgg_pad_frames {}", cfg.vgg_pad_frames),
        format!("bn_epsilon {}", cfg.bn_epsilon),
    ]
}

/// Serialises a model. Values are always stored as 32-bit floats.
pub fn encode_model<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let single_line = |what: &str, s: &str| {
        if s.contains('\n') || s.contains('\r') {
            Err(Error::ConfigInvalid(format!("{what} {s:?} contains a line break")))
        } else {
            Ok(())
        }
    };
    single_line("model name", &model.name)?;
    let mut lines = vec![format!("name {}", model.name)];
    lines.extend(config_lines(&model.config));
    for tag in &model.tag_vocabulary {
        single_line("tag", tag)?;
        lines.push(format!("tag {tag}"));
    }
    let mut payload = Vec::new();
    for layer in &model.params {
        for (name, t) in layer.named_tensors() {
            let dims: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
            lines.push(format!(
                "tensor {name} f32 {} {} {}",
                dims.join(","),
                payload.len(),
                4 * t.len()
            ));
            for &v in t.data() {
                payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    let mut manifest = lines.join("\n");
    manifest.push('\n');
    let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn save_model<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

struct Manifest {
    name: String,
    fields: HashMap<String, String>,
    tags: Vec<String>,
    tensors: Vec<TensorRecord>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::ManifestCorrupt(msg.into())
}

fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut name = None;
    let mut fields = HashMap::new();
    let mut tags = Vec::new();
    let mut tensors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "name" => name = Some(rest.to_string()),
            "tag" => tags.push(rest.to_string()),
            "tensor" => tensors.push(parse_record(rest, n + 1)?),
            "" => return Err(corrupt(format!("line {}: empty line", n + 1))),
            _ => {
                if fields.insert(key.to_string(), rest.to_string()).is_some() {
                    return Err(corrupt(format!("line {}: duplicate key {key:?}", n + 1)));
                }
            }
        }
    }
    Ok(Manifest {
        name: name.ok_or_else(|| corrupt("missing name"))?,
        fields,
        tags,
        tensors,
    })
}

fn parse_record(rest: &str, line: usize) -> Result<TensorRecord> {
    let parts: Vec<&str> = rest.split(' ').collect();
    let bad = |what: &str| corrupt(format!("line {line}: {what} in tensor record {rest:?}"));
    let [name, dtype, shape, offset, nbytes] = parts[..] else {
        return Err(bad("expected 5 fields"));
    };
    if dtype != "f32" {
        return Err(bad("unsupported dtype"));
    }
    let shape = shape
        .split(',')
        .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("bad shape"))?;
    let offset = offset.parse().map_err(|_| bad("bad offset"))?;
    let nbytes: usize = nbytes.parse().map_err(|_| bad("bad byte count"))?;
    Ok(TensorRecord {
        name: name.to_string(),
        shape,
        offset,
        nbytes,
    })
}

impl Manifest {
    fn raw(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| corrupt(format!("missing key {key:?}")))
    }

    fn get<X: std::str::FromStr>(&self, key: &str) -> Result<X> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| corrupt(format!("bad value {raw:?} for {key:?}")))
    }

    fn list<X: std::str::FromStr>(&self, key: &str) -> Result<Vec<X>> {
        self.raw(key)?
            .split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|_| corrupt(format!("bad list entry {v:?} for {key:?}")))
            })
            .collect()
    }

    fn config(&self) -> Result<ModelConfig> {
        let family = self.raw("family")?;
        let backend = self.raw("backend")?;
        let pools = self
            .raw("vgg_pool_shapes")?
            .split_whitespace()
            .map(|p| {
                let (h, w) = p.split_once('x')?;
                Some((h.parse().ok()?, w.parse().ok()?))
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| corrupt("bad vgg_pool_shapes"))?;
        Ok(ModelConfig {
            family: Family::parse(family).ok_or_else(|| corrupt(format!("unknown family {family:?}")))?,
            backend: Backend::parse(backend)
                .ok_or_else(|| corrupt(format!("unknown backend {backend:?}")))?,
            n_tags: self.get("n_tags")?,
            dsp: DspConfig {
                sample_rate: self.get("sample_rate")?,
                fft_size: self.get("fft_size")?,
                hop_size: self.get("hop_size")?,
                n_mels: self.get("n_mels")?,
                fmin: self.get("fmin")?,
                fmax: self.get("fmax")?,
                log_offset: self.get("log_offset")?,
                patch_frames: self.get("patch_frames")?,
                patch_hop_frames: self.get("patch_hop_frames")?,
            },
            timbral_filter_heights: self.list("timbral_filter_heights")?,
            timbral_channels: self.get("timbral_channels")?,
            temporal_filter_lengths: self.list("temporal_filter_lengths")?,
            temporal_channels: self.get("temporal_channels")?,
            midend_channels: self.get("midend_channels")?,
            midend_kernel: self.get("midend_kernel")?,
            penultimate_units: self.get("penultimate_units")?,
            vgg_block_channels: self.list("vgg_block_channels")?,
            vgg_pool_shapes: pools,
            vgg_pad_frames: self.get("vgg_pad_frames")?,
            bn_epsilon: self.get("bn_epsilon")?,
        })
    }
}

/// Parses a container held in memory.
pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic(found));
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("header shorter than 12 bytes"));
    }
    let len = u64::from_le_bytes(bytes[4..HEADER_LEN].try_into().expect("8 bytes"));
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(HEADER_LEN))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt(format!("declared manifest length {len} exceeds file")))?;
    let text = std::str::from_utf8(&bytes[HEADER_LEN..end])
        .map_err(|_| corrupt("manifest is not UTF-8"))?;
    let manifest = parse_manifest(text)?;
    let payload = &bytes[end..];

    let mut expected_offset = 0;
    for r in &manifest.tensors {
        if r.offset != expected_offset {
            return Err(corrupt(format!(
                "tensor {} starts at {}, expected {expected_offset}",
                r.name, r.offset
            )));
        }
        expected_offset += r.nbytes;
    }
    if payload.len() < expected_offset {
        return Err(Error::PayloadTruncated {
            expected: expected_offset,
            actual: payload.len(),
        });
    }
    if payload.len() > expected_offset {
        return Err(corrupt(format!(
            "{} trailing payload bytes",
            payload.len() - expected_offset
        )));
    }

    let config = manifest.config()?;
    let mut model: Model<T> = build_model(&config, Init::Zeros, manifest.tags.clone())?;
    model.name = manifest.name.clone();
    let mut records: HashMap<&str, &TensorRecord> = HashMap::new();
    for r in &manifest.tensors {
        if records.insert(r.name.as_str(), r).is_some() {
            return Err(corrupt(format!("duplicate tensor {}", r.name)));
        }
    }
    let mut used = 0;
    for layer in &mut model.params {
        for (name, slot) in layer.named_tensors_mut() {
            let r = records
                .get(name.as_str())
                .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
            if r.shape != slot.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name}: manifest shape {:?}, config implies {:?}",
                    r.shape,
                    slot.shape()
                )));
            }
            if r.nbytes != 4 * slot.len() {
                return Err(corrupt(format!(
                    "tensor {name}: {} bytes for {} values",
                    r.nbytes,
                    slot.len()
                )));
            }
            let data = payload[r.offset..r.offset + r.nbytes]
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect();
            *slot = Tensor::new(r.shape.clone(), data)?;
            used += 1;
        }
    }
    if used != manifest.tensors.len() {
        let known: Vec<String> = model
            .params
            .iter()
            .flat_map(|p| p.named_tensors().into_iter().map(|(n, _)| n))
            .collect();
        let extra = manifest
            .tensors
            .iter()
            .find(|r| !known.contains(&r.name))
            .map(|r| r.name.clone())
            .unwrap_or_default();
        return Err(corrupt(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

/// Reads only the manifest records of a container.
pub fn read_records(bytes: &[u8]) -> Result<Vec<TensorRecord>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(corrupt("not a container"));
    }
    let len = u64::from_le_bytes(bytes[4..HEADER_LEN].try_into().expect("8 bytes")) as usize;
    let text = bytes
        .get(HEADER_LEN..HEADER_LEN + len)
        .and_then(|b| std::str::from_utf8(b).ok())
        .ok_or_else(|| corrupt("unreadable manifest"))?;
    Ok(parse_manifest(text)?.tensors)
}

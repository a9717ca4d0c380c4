//! Binary checkpoints: a text header, a little-endian payload and a CRC32
//! trailer over the payload.
//!
//! ```text
//! EPU1
//! key = value
//! ...
//! <blank line>
//! payload: beta, every sub-network parameter (f32), then each batch-norm
//!          layer's running mean and variance (f64)
//! crc32 (u32 LE)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ArchConfig, EpuModel, Mode};
use crate::pfm::PfmKind;

pub const CHECKPOINT_MAGIC: &str = "EPU1";
pub const FORMAT_VERSION: u32 = 1;

/// Everything besides the weights that a checkpoint records.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub class_names: Vec<String>,
    pub pfm_side: usize,
    pub epoch: usize,
    /// Validation metrics at save time, e.g. `("auc", 0.97)`.
    pub metrics: Vec<(String, f64)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn header(model: &EpuModel<f32>, meta: &CheckpointMeta) -> String {
    let arch = &model.arch;
    let labels: Vec<&str> = model.pfm_labels.iter().map(|k| k.slug()).collect();
    let mut lines = vec![
        CHECKPOINT_MAGIC.to_string(),
        format!("format_version = {FORMAT_VERSION}"),
        format!("mode = {}", model.mode),
        format!("n_pfms = {}", model.n_pfms()),
        format!("pfm_labels = {}", labels.join(",")),
        format!("class_names = {}", meta.class_names.join(",")),
        format!("preset = {}", arch.preset),
        format!("blocks = {}", arch.blocks_string()),
        format!("kernel_size = {}", arch.kernel_size),
        format!("fc_width = {}", arch.fc_width),
        format!("input_side = {}", arch.input_side),
        format!("bn_momentum = {}", arch.bn_momentum),
        format!("bn_epsilon = {}", arch.bn_epsilon),
        format!("pfm_side = {}", meta.pfm_side),
        format!("epoch = {}", meta.epoch),
    ];
    for (k, v) in &meta.metrics {
        lines.push(format!("metric.{k} = {v}"));
    }
    lines.push(format!("param_count = {}", model.param_count()));
    let mut tensors = vec![format!("beta:{}", model.mode.head_width())];
    for net in &model.subnets {
        for p in net.params.iter() {
            let dims: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
            tensors.push(format!("{}:{}", p.name, dims.join("x")));
        }
    }
    lines.push(format!("tensors = {}", tensors.join(",")));
    lines.push(String::new());
    lines.join("\n") + "\n"
}

fn payload(model: &EpuModel<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.param_count() * 4);
    let put32 = |vals: &[f32], out: &mut Vec<u8>| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    put32(model.beta(), &mut out);
    for net in &model.subnets {
        for p in net.params.iter() {
            put32(p.tensor.data(), &mut out);
        }
    }
    for net in &model.subnets {
        for s in net.running_stats() {
            for v in s.mean.iter().chain(&s.var) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Serialises the model and metadata to bytes.
pub fn checkpoint_bytes(model: &EpuModel<f32>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut bytes = header(model, meta).into_bytes();
    let body = payload(model);
    let crc = crc32fast::hash(&body);
    bytes.extend_from_slice(&body);
    bytes.extend_from_slice(&crc.to_le_bytes());
    bytes
}

pub fn save_checkpoint(path: &Path, model: &EpuModel<f32>, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint_bytes(model, meta)).map_err(|e| Error::io(path, e))
}

struct Header {
    fields: Vec<(String, String)>,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| bad(format!("header is missing `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| bad(format!("cannot parse `{key}` value {raw:?}")))
    }
}

fn split_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("header is not terminated"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let mut fields = Vec::new();
    for line in lines {
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
        fields.push((k.to_string(), v.to_string()));
    }
    Ok((Header { fields }, &bytes[end + 2..]))
}

fn split_list(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').map(str::to_string).collect()
    }
}

/// Parses checkpoint bytes back into a model and its metadata.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(EpuModel<f32>, CheckpointMeta)> {
    let (h, rest) = split_header(bytes)?;
    let version: u32 = h.parse("format_version")?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let mode: Mode = h.get("mode")?.parse().map_err(|_| bad("invalid mode"))?;
    let n_pfms: usize = h.parse("n_pfms")?;
    let arch = ArchConfig {
        preset: h.get("preset")?.to_string(),
        blocks: ArchConfig::parse_blocks(h.get("blocks")?).map_err(|e| bad(e.to_string()))?,
        kernel_size: h.parse("kernel_size")?,
        fc_width: h.parse("fc_width")?,
        input_side: h.parse("input_side")?,
        bn_momentum: h.parse("bn_momentum")?,
        bn_epsilon: h.parse("bn_epsilon")?,
    };
    let mut model = EpuModel::<f32>::new(&arch, n_pfms, mode, 0).map_err(|e| bad(e.to_string()))?;
    model.pfm_labels = split_list(h.get("pfm_labels")?)
        .iter()
        .map(|s| s.parse::<PfmKind>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| bad(e.to_string()))?;
    if model.pfm_labels.len() != n_pfms {
        return Err(bad("pfm_labels does not match n_pfms"));
    }
    let declared: usize = h.parse("param_count")?;
    if declared != model.param_count() {
        return Err(bad(format!(
            "header declares {declared} parameters, architecture has {}",
            model.param_count()
        )));
    }
    let stats_len: usize = model
        .subnets
        .iter()
        .flat_map(|n| n.running_stats())
        .map(|s| s.mean.len() * 2)
        .sum();
    let body_len = declared * 4 + stats_len * 8;
    if rest.len() < body_len + 4 {
        return Err(bad(format!(
            "payload truncated: expected {} bytes, found {}",
            body_len + 4,
            rest.len()
        )));
    }
    if rest.len() > body_len + 4 {
        return Err(bad("trailing bytes after checksum"));
    }
    let (body, trailer) = rest.split_at(body_len);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch, file is corrupt"));
    }
    let mut f32s = body[..declared * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut fill = |dst: &mut [f32]| dst.iter_mut().for_each(|v| *v = f32s.next().unwrap());
    fill(model.beta_mut());
    for net in &mut model.subnets {
        for p in net.params.iter_mut() {
            fill(p.tensor.data_mut());
        }
    }
    let mut f64s = body[declared * 4..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for net in &mut model.subnets {
        for s in net.running_stats_mut() {
            for v in s.mean.iter_mut().chain(s.var.iter_mut()) {
                *v = f64s.next().unwrap();
            }
        }
    }
    let metrics = h
        .fields
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("metric.").map(|m| (m, v)))
        .map(|(m, v)| {
            v.parse()
                .map(|x| (m.to_string(), x))
                .map_err(|_| bad(format!("cannot parse metric {m}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = CheckpointMeta {
        class_names: split_list(h.get("class_names")?),
        pfm_side: h.parse("pfm_side")?,
        epoch: h.parse("epoch")?,
        metrics,
    };
    Ok((model, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<(EpuModel<f32>, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

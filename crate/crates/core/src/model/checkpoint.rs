//! Checkpoint file: magic line, text manifest, then raw little-endian f32.
//!
//! ```text
//! MEDER1
//! kind ensemble
//! config vocab_size=50 max_len=16 ...
//! tensor b1.word_emb 50,8 0
//! ...
//! end
//! <f32 data, tensors back to back in manifest order>
//! ```
//!
//! Single models carry an extra `order text-first` line after `kind`.
//! Offsets are byte offsets into the data section.

use std::fs;
use std::path::Path;

use super::{AnyModel, Classifier, EnsembleModel, ModelConfig, SingleModel};
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tensor};
use crate::pairseq::Order;

pub const CHECKPOINT_MAGIC: &[u8] = b"MEDER1\n";

pub fn checkpoint_bytes(model: &AnyModel<f32>) -> Vec<u8> {
    let mut header = String::new();
    match model {
        AnyModel::Single(m) => {
            header.push_str("kind single\n");
            header.push_str(&format!("order {}\n", m.order.as_str()));
        }
        AnyModel::Ensemble(_) => header.push_str("kind ensemble\n"),
    }
    let cfg: Vec<String> = model.config().to_pairs().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    header.push_str(&format!("config {}\n", cfg.join(" ")));
    let mut offset = 0usize;
    let mut data = Vec::new();
    for (name, t) in model.params().iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("tensor {name} {} {offset}\n", dims.join(",")));
        for v in t.data() {
            data.extend_from_slice(&v.to_le_bytes());
        }
        offset += 4 * t.len();
    }
    header.push_str("end\n");
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&data);
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<AnyModel<f32>> {
    let bad = |m: String| Error::Checkpoint(m);
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| bad("missing MEDER1 magic".into()))?;
    let end_marker = b"\nend\n";
    let header_end = rest
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .ok_or_else(|| bad("manifest has no end line".into()))?;
    let header = std::str::from_utf8(&rest[..header_end + 1]).map_err(|_| bad("manifest is not UTF-8".into()))?;
    let data = &rest[header_end + end_marker.len()..];

    let mut kind = None;
    let mut order = None;
    let mut cfg = None;
    let mut params = ParamStore::new();
    let mut expected_offset = 0usize;
    for line in header.lines() {
        let (key, value) = line.split_once(' ').ok_or_else(|| bad(format!("malformed manifest line {line:?}")))?;
        match key {
            "kind" => kind = Some(value.to_owned()),
            "order" => order = Some(value.parse::<Order>().map_err(|e| bad(e.to_string()))?),
            "config" => {
                let pairs = value
                    .split(' ')
                    .map(|kv| kv.split_once('=').ok_or_else(|| bad(format!("malformed config entry {kv:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                cfg = Some(ModelConfig::from_pairs(pairs)?);
            }
            "tensor" => {
                let parts: Vec<&str> = value.split(' ').collect();
                let [name, dims, off] = parts[..] else {
                    return Err(bad(format!("malformed tensor line {line:?}")));
                };
                let shape = dims
                    .split(',')
                    .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape {dims:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                let off: usize = off.parse().map_err(|_| bad(format!("bad offset {off:?}")))?;
                if off != expected_offset {
                    return Err(bad(format!("tensor {name}: offset {off}, expected {expected_offset}")));
                }
                let n: usize = shape.iter().product();
                let chunk = data
                    .get(off..off + 4 * n)
                    .ok_or_else(|| bad(format!("tensor {name} runs past the end of the file")))?;
                let values = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                params.add(name, Tensor::new(shape, values)?);
                expected_offset += 4 * n;
            }
            _ => return Err(bad(format!("unknown manifest key {key:?}"))),
        }
    }
    if expected_offset != data.len() {
        return Err(bad(format!(
            "data section has {} bytes, manifest describes {expected_offset}",
            data.len()
        )));
    }
    let cfg = cfg.ok_or_else(|| bad("manifest has no config line".into()))?;
    match kind.as_deref() {
        Some("ensemble") => Ok(AnyModel::Ensemble(EnsembleModel::with_params(cfg, params)?)),
        Some("single") => {
            let order = order.ok_or_else(|| bad("single model without order line".into()))?;
            Ok(AnyModel::Single(SingleModel::with_params(cfg, order, params)?))
        }
        other => Err(bad(format!("unknown model kind {other:?}"))),
    }
}

pub fn save_checkpoint(model: &AnyModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AnyModel<f32>> {
    let path = path.as_ref();
    parse_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

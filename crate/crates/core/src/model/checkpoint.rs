//! Model checkpoint format.
//!
//! ```text
//! "ZSLM" | u32 version=1 | u32 d | u32 h | u32 a
//! W1 (h×d) | b1 (h) | W2 (a×h) | b2 (a) | w (a)      f64, row-major, little-endian
//! TrainConfig as JSON (rest of file), plus an optional "split" key
//! ```

use super::{validate_weights, MappingModel, TrainConfig};
use crate::dataset::SplitFile;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ZSLM";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER: usize = 20;
const FILE: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MappingModel,
    /// Attribute weights the model was trained under.
    pub weights: Vec<f64>,
    pub config: TrainConfig,
    /// The split the model was trained on, when recorded.
    pub split: Option<SplitFile>,
}

const SPLIT_KEY: &str = "split";

pub fn encode_checkpoint(
    model: &MappingModel,
    weights: &[f64],
    config: &TrainConfig,
    split: Option<&SplitFile>,
) -> Result<Vec<u8>> {
    if weights.len() != model.attr_dim() {
        return Err(Error::dims(format!(
            "{} weights for {} attributes",
            weights.len(),
            model.attr_dim()
        )));
    }
    let mut out = Vec::with_capacity(HEADER + 8 * (model.num_params() + weights.len()) + 256);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION as usize, model.input_dim(), model.hidden_dim(), model.attr_dim()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in model.params().into_iter().flatten().chain(weights) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut trailer = serde_json::to_value(config).expect("config serializes");
    if let (Some(split), Some(obj)) = (split, trailer.as_object_mut()) {
        obj.insert(SPLIT_KEY.into(), serde_json::to_value(split).expect("split serializes"));
    }
    serde_json::to_writer(&mut out, &trailer).expect("trailer serializes");
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let err = |msg: String| Error::format(FILE, None, msg);
    if bytes.len() < HEADER {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(err("bad magic, expected ZSLM".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != CHECKPOINT_VERSION as usize {
        return Err(err(format!("unsupported version {}", word(0))));
    }
    let (d, h, a) = (word(1), word(2), word(3));
    if d == 0 || h == 0 || a == 0 {
        return Err(err(format!("zero dimension in d={d} h={h} a={a}")));
    }
    let count = h
        .checked_mul(d)
        .and_then(|n| n.checked_add(h))
        .and_then(|n| a.checked_mul(h).and_then(|m| n.checked_add(m)))
        .and_then(|n| n.checked_add(2 * a))
        .ok_or_else(|| err("dimensions overflow".into()))?;
    let body_len = count
        .checked_mul(8)
        .filter(|&len| len <= bytes.len() - HEADER)
        .ok_or_else(|| err(format!("file too short for d={d} h={h} a={a}")))?;
    let mut values = bytes[HEADER..HEADER + body_len]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let w1 = Matrix::from_vec(h, d, take(h * d))?;
    let b1 = take(h);
    let w2 = Matrix::from_vec(a, h, take(a * h))?;
    let b2 = take(a);
    let weights = take(a);
    let model = MappingModel::from_parts(w1, b1, w2, b2)?;
    if !model.is_finite() {
        return Err(err("non-finite parameter".into()));
    }
    validate_weights(&weights).map_err(|e| err(e.to_string()))?;
    let mut trailer: serde_json::Value = serde_json::from_slice(&bytes[HEADER + body_len..])
        .map_err(|e| err(format!("config trailer: {e}")))?;
    let split = match trailer.as_object_mut().and_then(|o| o.remove(SPLIT_KEY)) {
        Some(v) => {
            let split: SplitFile =
                serde_json::from_value(v).map_err(|e| err(format!("split in trailer: {e}")))?;
            if !(split.diag_fraction > 0.0 && split.diag_fraction < 1.0) {
                return Err(err(format!("split diag_fraction {} outside (0, 1)", split.diag_fraction)));
            }
            Some(split)
        }
        None => None,
    };
    let config: TrainConfig =
        serde_json::from_value(trailer).map_err(|e| err(format!("config trailer: {e}")))?;
    config.validate().map_err(|e| err(e.to_string()))?;
    if config.hidden_dim != h {
        return Err(err(format!(
            "config hidden_dim {} disagrees with header h={h}",
            config.hidden_dim
        )));
    }
    Ok(Checkpoint {
        model,
        weights,
        config,
        split,
    })
}

//! Binary checkpoint: `RCON` magic, `u32` format version, `u64` header
//! length, UTF-8 JSON header, then little-endian `f32` tensor payloads in
//! header order. All integers are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::autodiff::Tensor;
use crate::model::ModelParams;

pub const MAGIC: &[u8; 4] = b"RCON";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported by this reader (expects {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error("payload length mismatch for tensor {tensor}: needs {expected} bytes at offset {offset}, payload has {available}")]
    PayloadLength { tensor: String, expected: usize, offset: usize, available: usize },
    #[error("checkpoint i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrained,
    Finetuned,
}

/// Per-feature z-score statistics of the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Population mean and standard deviation per column; a zero spread is
    /// replaced by 1 so constant features map to 0.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 1e-12 * mean[j].abs().max(1.0) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f32> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| ((x - m) / s) as f32).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub pretrain_loss: Vec<f64>,
    pub finetune_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub phase: Phase,
    pub config: TrainConfig,
    pub feature_stats: Option<FeatureStats>,
    pub history: TrainingHistory,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    feature_schema: String,
    phase: Phase,
    config: TrainConfig,
    feature_stats: Option<FeatureStats>,
    history: TrainingHistory,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let tensors = self
            .params
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset };
                offset += t.numel() * 4;
                e
            })
            .collect();
        let header = Header {
            feature_schema: crate::radiomics::SCHEMA_ID.to_string(),
            phase: self.phase,
            config: self.config.clone(),
            feature_stats: self.feature_stats.clone(),
            history: self.history.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 {
            return Err(CheckpointError::Truncated("magic"));
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 8 {
            return Err(CheckpointError::Truncated("format version"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
        }
        if bytes.len() < PREAMBLE {
            return Err(CheckpointError::Truncated("header length"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = PREAMBLE.checked_add(header_len).filter(|&e| e <= bytes.len());
        let header_end = header_end.ok_or(CheckpointError::Truncated("header"))?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        if header.feature_schema != crate::radiomics::SCHEMA_ID {
            return Err(CheckpointError::Header(format!("unknown feature schema {:?}", header.feature_schema)));
        }

        let payload = &bytes[header_end..];
        let mut params = ModelParams::new();
        let mut expected_end = 0;
        for e in header.tensors {
            let numel: usize = e.shape.iter().product();
            let needed = numel * 4;
            let Some(chunk) = payload.get(e.offset..e.offset + needed) else {
                return Err(CheckpointError::PayloadLength {
                    tensor: e.name,
                    expected: needed,
                    offset: e.offset,
                    available: payload.len(),
                });
            };
            let data = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let tensor = Tensor::new(e.shape, data).map_err(|err| CheckpointError::Header(format!("{}: {err}", e.name)))?;
            expected_end = expected_end.max(e.offset + needed);
            if params.insert(e.name.clone(), tensor).is_some() {
                return Err(CheckpointError::Header(format!("duplicate tensor {}", e.name)));
            }
        }
        if payload.len() != expected_end {
            return Err(CheckpointError::PayloadLength {
                tensor: "<end of payload>".into(),
                expected: expected_end,
                offset: 0,
                available: payload.len(),
            });
        }
        Ok(Checkpoint {
            phase: header.phase,
            config: header.config,
            feature_stats: header.feature_stats,
            history: header.history,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

//! Image and radiomics encoders, classifier head and attention maps.
//!
//! Image tower: stem conv, then per stage a residual block followed by
//! attention modules, 2x max-pool between stages, global average pool and a
//! 256-wide MLP projecting to the 128-dim embedding `u`. Radiomics tower: MLP
//! 102 -> 256 -> 128 producing `v`. Convolutions carry no bias.

mod forward;
mod init;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tensor, TensorError};

pub use forward::{
    attention_module_forward, bind, classify, classifier_logit, encode_image, encode_radiomics,
    extract_attention_map, image_forward, image_input, linear, radiomics_forward, Bound, ImageForward,
};
pub use init::{fit_head_input, init_classifier, init_params, param_shapes};
pub(crate) use forward::stable_sigmoid;

pub const EMBEDDING_DIM: usize = 128;
pub const HIDDEN_DIM: usize = 256;
pub const RADIOMICS_DIM: usize = crate::radiomics::FEATURE_COUNT;

/// Parameter path to tensor. Image tower names start with `image.`, the
/// radiomics tower with `radiomics.`, the head with `classifier.` and its frozen
/// input normalization with `head_input.`.
pub type ModelParams = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid backbone config: {0}")]
    Config(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_resolution: usize,
    pub stem_channels: usize,
    pub stage_channels: Vec<usize>,
    pub attention_modules: usize,
    pub embedding_dim: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            input_resolution: 64,
            stem_channels: 16,
            stage_channels: vec![16, 32],
            attention_modules: 1,
            embedding_dim: EMBEDDING_DIM,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let r = self.input_resolution;
        if r < 32 || !r.is_power_of_two() {
            return Err(ModelError::Config(format!("input resolution must be a power of two >= 32, got {r}")));
        }
        if self.embedding_dim != EMBEDDING_DIM {
            return Err(ModelError::Config(format!("embedding dim is fixed at {EMBEDDING_DIM}")));
        }
        if self.stem_channels == 0 || self.stage_channels.is_empty() || self.stage_channels.contains(&0) {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        let last = r >> (self.stage_channels.len() - 1);
        if self.attention_modules > 0 && last < 4 {
            return Err(ModelError::Config(format!("final stage extent {last} is below 4")));
        }
        Ok(())
    }

    /// Spatial extent of stage `s` (0-based).
    pub fn stage_extent(&self, s: usize) -> usize {
        self.input_resolution >> s
    }

    pub fn final_channels(&self) -> usize {
        *self.stage_channels.last().expect("validated")
    }
}

/// Total scalar parameter count of both towers (no classifier head).
pub fn param_count(config: &BackboneConfig) -> usize {
    param_shapes(config).iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}

//! Training hyperparameters and the flat `key=value` config file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::contrastive::{ContrastiveConfig, SimilarityKernel};
use crate::model::BackboneConfig;
use crate::radiomics::RadiomicsConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau: f64,
    pub p: f64,
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Smallest decrease of the epoch-mean loss that counts as improvement.
    pub min_delta: f64,
    /// Global gradient-norm bound per step; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub resolution: usize,
    pub bins: usize,
    pub similarity_kernel: SimilarityKernel,
    pub stem_channels: usize,
    pub stage_channels: Vec<usize>,
    pub attention_modules: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let backbone = BackboneConfig::default();
        Self {
            tau: 0.1,
            p: 2.0,
            lambda: 0.5,
            lr: 0.1,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            min_delta: 1e-5,
            grad_clip: 1.0,
            seed: 0,
            resolution: backbone.input_resolution,
            bins: RadiomicsConfig::default().bins,
            similarity_kernel: SimilarityKernel::NegDistance,
            stem_channels: backbone.stem_channels,
            stage_channels: backbone.stage_channels,
            attention_modules: backbone.attention_modules,
        }
    }
}

impl TrainConfig {
    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig { tau: self.tau, p: self.p, lambda: self.lambda, kernel: self.similarity_kernel }
    }

    pub fn backbone(&self) -> BackboneConfig {
        BackboneConfig {
            input_resolution: self.resolution,
            stem_channels: self.stem_channels,
            stage_channels: self.stage_channels.clone(),
            attention_modules: self.attention_modules,
            ..BackboneConfig::default()
        }
    }

    pub fn radiomics(&self) -> RadiomicsConfig {
        RadiomicsConfig { bins: self.bins }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let usage = |m: String| Err(PipelineError::Usage(m));
        self.contrastive().validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
        self.backbone().validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return usage(format!("lr must be positive, got {}", self.lr));
        }
        if self.patience < 1 {
            return usage("patience must be at least 1".into());
        }
        if self.batch_size < 1 {
            return usage("batch_size must be at least 1".into());
        }
        if self.bins < 2 {
            return usage(format!("bins must be at least 2, got {}", self.bins));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return usage(format!("grad_clip must be non-negative, got {}", self.grad_clip));
        }
        if !(self.min_delta >= 0.0) {
            return usage(format!("min_delta must be non-negative, got {}", self.min_delta));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
            value.parse().map_err(|_| PipelineError::Usage(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "tau" => self.tau = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "min_delta" => self.min_delta = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "resolution" => self.resolution = parse(key, value)?,
            "bins" => self.bins = parse(key, value)?,
            "similarity_kernel" => {
                self.similarity_kernel = value.parse().map_err(|e: crate::contrastive::ObjectiveError| {
                    PipelineError::Usage(e.to_string())
                })?
            }
            "stem_channels" => self.stem_channels = parse(key, value)?,
            "stage_channels" => {
                self.stage_channels =
                    value.split(',').map(|v| parse(key, v.trim())).collect::<Result<Vec<usize>, _>>()?
            }
            "attention_modules" => self.attention_modules = parse(key, value)?,
            other => return Err(PipelineError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn parse_str(text: &str) -> Result<Self, PipelineError> {
        let mut config = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Usage(format!("config line {}: expected key=value", n + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Writes every field back out in `key=value` form.
    pub fn to_config_string(&self) -> String {
        let stages: Vec<String> = self.stage_channels.iter().map(|c| c.to_string()).collect();
        format!(
            "tau={}\np={}\nlambda={}\nlr={}\nbatch_size={}\nmax_epochs={}\npatience={}\nmin_delta={}\ngrad_clip={}\nseed={}\n\
             resolution={}\nbins={}\nsimilarity_kernel={}\nstem_channels={}\nstage_channels={}\nattention_modules={}\n",
            self.tau,
            self.p,
            self.lambda,
            self.lr,
            self.batch_size,
            self.max_epochs,
            self.patience,
            self.min_delta,
            self.grad_clip,
            self.seed,
            self.resolution,
            self.bins,
            self.similarity_kernel,
            self.stem_channels,
            stages.join(","),
            self.attention_modules
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.tau, c.p, c.lambda, c.lr), (0.1, 2.0, 0.5, 0.1));
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (64, 200, 10));
        assert_eq!((c.resolution, c.bins), (64, 32));
        assert_eq!(c.similarity_kernel, SimilarityKernel::NegDistance);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn file_round_trip() {
        let mut c = TrainConfig::default();
        c.set("stage_channels", "8, 16").unwrap();
        c.set("similarity_kernel", "raw_distance").unwrap();
        c.set("tau", "0.25").unwrap();
        let text = format!("# comment\n\n{}", c.to_config_string());
        assert_eq!(TrainConfig::parse_str(&text).unwrap(), c);
    }

    #[test]
    fn bundled_synthetic_config_parses() {
        let c = TrainConfig::parse_str(include_str!("../../../../configs/synthetic.conf")).unwrap();
        assert_eq!((c.batch_size, c.stem_channels, c.max_epochs), (16, 4, 15));
        assert_eq!(c.stage_channels, vec![4, 8]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn bad_entries_are_usage_errors() {
        for text in ["tau", "tau=abc", "colour=blue", "similarity_kernel=cosine"] {
            assert!(matches!(TrainConfig::parse_str(text), Err(PipelineError::Usage(_))), "{text}");
        }
        let c = TrainConfig::parse_str("lambda=2").unwrap();
        assert!(c.validate().is_err());
        let c = TrainConfig::parse_str("patience=0").unwrap();
        assert!(c.validate().is_err());
    }
}

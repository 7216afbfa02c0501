//! File-level entry points behind the CLI subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::checkpoint::{Checkpoint, Phase};
use super::metrics::MetricsReport;
use super::train::{evaluate, finetune, pretrain, radiomics_rows};
use super::{PipelineError, TrainConfig};
use crate::data::{generate_synthetic_dataset, load_manifest, DataError, GrayImage, Sample, SyntheticConfig};
use crate::model::extract_attention_map;
use crate::radiomics::FEATURE_NAMES;

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

/// Loads the manifest and its images. Per-sample failures are returned next
/// to the samples that did load.
pub fn load_samples(manifest: &Path, images: &Path) -> Result<(Vec<Sample>, Vec<DataError>), PipelineError> {
    let loaded = load_manifest(manifest, images)?;
    Ok((loaded.samples, loaded.failures))
}

/// Loads samples for training or evaluation, warning about (and skipping)
/// samples whose images are missing.
fn load_for_training(manifest: &Path, images: &Path) -> Result<Vec<Sample>, PipelineError> {
    let (samples, failures) = load_samples(manifest, images)?;
    for f in &failures {
        log::warn!("skipping sample: {f}");
    }
    if samples.is_empty() {
        return Err(DataError::Invalid(format!("no loadable samples in {}", manifest.display())).into());
    }
    Ok(samples)
}

pub fn cmd_synth(out_dir: &Path, n: usize, seed: u64, resolution: usize) -> Result<Vec<Sample>, PipelineError> {
    if n < 8 || resolution < 32 {
        return Err(PipelineError::Usage(format!("synth needs n >= 8 and resolution >= 32, got {n} and {resolution}")));
    }
    Ok(generate_synthetic_dataset(&SyntheticConfig { n, seed, resolution }, out_dir)?)
}

/// Writes `id` plus the 102 feature names as header, then one row per
/// sample with 17 significant digits per value.
pub fn write_feature_csv(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<(), PipelineError> {
    let mut out = String::from("id");
    for name in FEATURE_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (id, values) in rows {
        out.push_str(id);
        for v in values {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Extracts radiomics for every sample. Rows that succeed are written even
/// when others fail; any failure makes the command fail afterwards.
pub fn cmd_extract_features(manifest: &Path, images: &Path, out_csv: &Path, bins: usize) -> Result<usize, PipelineError> {
    let (samples, mut failures) = load_samples(manifest, images)?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        match radiomics_rows(&[s], bins) {
            Ok(mut r) => rows.push((s.id.clone(), r.remove(0))),
            Err(PipelineError::Data(e)) => failures.push(e),
            Err(e) => return Err(e),
        }
    }
    write_feature_csv(out_csv, &rows)?;
    if !failures.is_empty() {
        let msgs: Vec<String> = failures.iter().map(|f| f.to_string()).collect();
        return Err(DataError::Invalid(format!("{} sample(s) failed: {}", failures.len(), msgs.join("; "))).into());
    }
    Ok(rows.len())
}

/// `epoch,loss` rows, one per entry.
pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<(), PipelineError> {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{l:.16e}\n", i + 1));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

fn loss_csv_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("loss.csv")
}

/// Pretrains, writes the checkpoint and `<out>.loss.csv` next to it.
pub fn cmd_pretrain(manifest: &Path, images: &Path, config: &TrainConfig, out: &Path) -> Result<Checkpoint, PipelineError> {
    config.validate()?;
    let samples = load_for_training(manifest, images)?;
    let ckpt = pretrain(&samples, config)?;
    ckpt.save(out)?;
    write_loss_csv(&loss_csv_path(out), &ckpt.history.pretrain_loss)?;
    Ok(ckpt)
}

/// Fine-tunes from `in_ckpt`, or from scratch when `from_scratch` is set.
pub fn cmd_finetune(
    manifest: &Path,
    images: &Path,
    in_ckpt: Option<&Path>,
    config: &TrainConfig,
    out: &Path,
    from_scratch: bool,
) -> Result<Checkpoint, PipelineError> {
    let pretrained = match (in_ckpt, from_scratch) {
        (_, true) => None,
        (Some(p), false) => {
            let c = Checkpoint::load(p)?;
            if c.phase != Phase::Pretrained {
                return Err(PipelineError::Usage(format!(
                    "{} is a {:?} checkpoint; fine-tuning needs a pretrained one (or --from-scratch)",
                    p.display(),
                    c.phase
                )));
            }
            Some(c)
        }
        (None, false) => return Err(PipelineError::Usage("finetune needs --ckpt or --from-scratch".into())),
    };
    config.validate()?;
    let samples = load_for_training(manifest, images)?;
    let ckpt = finetune(&samples, pretrained.as_ref(), config)?;
    ckpt.save(out)?;
    write_loss_csv(&loss_csv_path(out), &ckpt.history.finetune_loss)?;
    Ok(ckpt)
}

/// Evaluates a fine-tuned checkpoint on the test split and writes the JSON
/// report.
pub fn cmd_evaluate(manifest: &Path, images: &Path, ckpt: &Path, out: &Path) -> Result<MetricsReport, PipelineError> {
    let ckpt = Checkpoint::load(ckpt)?;
    if ckpt.phase != Phase::Finetuned {
        return Err(PipelineError::Usage("evaluate needs a fine-tuned checkpoint".into()));
    }
    let samples = load_for_training(manifest, images)?;
    let report = evaluate(&samples, &ckpt)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| io_err(out, e))?;
    json.push('\n');
    let mut f = std::fs::File::create(out).map_err(|e| io_err(out, e))?;
    f.write_all(json.as_bytes()).map_err(|e| io_err(out, e))?;
    Ok(report)
}

/// The attention map as an 8-bit image at the model's input resolution,
/// and the composite of the resized input (left) next to the map (right).
pub fn attention_map_images(image: &GrayImage, ckpt: &Checkpoint) -> Result<(GrayImage, GrayImage), PipelineError> {
    let backbone = ckpt.config.backbone();
    let r = backbone.input_resolution;
    let map = extract_attention_map(image, &ckpt.params, &backbone)?;
    let map_px: Vec<u8> = map.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let resized = image.resize_square(r);
    let input = resized.pixels();
    let mut composite = Vec::with_capacity(2 * r * r);
    for y in 0..r {
        composite.extend_from_slice(&input[y * r..(y + 1) * r]);
        composite.extend_from_slice(&map_px[y * r..(y + 1) * r]);
    }
    Ok((GrayImage::new(r, r, map_px)?, GrayImage::new(2 * r, r, composite)?))
}

/// Writes the map to `out` and the composite to `<stem>_composite.pgm`.
pub fn cmd_attention_map(ckpt: &Path, image: &Path, out: &Path) -> Result<PathBuf, PipelineError> {
    let ckpt = Checkpoint::load(ckpt)?;
    let img = GrayImage::open(image).map_err(|e| PipelineError::Io(e.to_string()))?;
    let (map, composite) = attention_map_images(&img, &ckpt)?;
    map.save(out)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("attention");
    let composite_path = out.with_file_name(format!("{stem}_composite.pgm"));
    composite.save(&composite_path)?;
    Ok(composite_path)
}

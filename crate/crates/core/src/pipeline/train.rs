//! Contrastive pretraining, supervised fine-tuning and test-split evaluation.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use rayon::prelude::*;

use super::checkpoint::{Checkpoint, FeatureStats, Phase, TrainingHistory};
use super::metrics::MetricsReport;
use super::{PipelineError, TrainConfig};
use crate::autodiff::{sgd_step, Tape, Tensor, Var};
use crate::contrastive::{combined_loss_and_grad, finetune_logit_grad, finetune_loss};
use crate::data::{make_batches, split_dataset, BatchMode, DatasetSplit, Sample};
use crate::model::{
    bind, classifier_logit, classify, encode_image, fit_head_input, image_forward, image_input, init_classifier, init_params,
    radiomics_forward, BackboneConfig, Bound, ModelError, ModelParams, RADIOMICS_DIM,
};
use crate::radiomics::extract_radiomics;
use crate::rng::substream;

/// Stops once the monitored loss has failed to improve on its best value
/// by more than `min_delta` for `patience` consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self { patience, min_delta, best: f64::INFINITY, stale: 0 }
    }

    /// Records one epoch's loss; returns true when training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

/// Per-parameter gradients from one tape, in bound order.
type Grads = Vec<(String, Vec<f32>)>;

fn take_grads(tape: &mut Tape, bound: &Bound) -> Grads {
    bound
        .iter()
        .map(|(name, var)| {
            let g = tape.take_grad(var).unwrap_or_else(|| vec![0.0; tape.value(var).numel()]);
            (name.to_string(), g)
        })
        .collect()
}

fn bind_all(tape: &mut Tape, params: &ModelParams, prefixes: &[&str]) -> Bound {
    let mut vars = Vec::new();
    for p in prefixes {
        let b = bind(tape, params, p, true);
        vars.extend(b.iter().map(|(n, v)| (n.to_string(), v)));
    }
    Bound::from_vars(vars)
}

/// Sums gradients in the given order, rescales the total to global L2 norm
/// at most `clip` (when `clip > 0`) and takes one SGD step on every
/// parameter that received a gradient.
fn apply_grads(
    params: &mut ModelParams,
    grads: impl IntoIterator<Item = Grads>,
    lr: f64,
    clip: f64,
) -> Result<(), PipelineError> {
    let mut summed: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for set in grads {
        for (name, g) in set {
            match summed.get_mut(&name) {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => {
                    summed.insert(name, g);
                }
            }
        }
    }
    let norm = summed.values().flatten().map(|&g| g as f64 * g as f64).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(PipelineError::Numeric("non-finite gradient".into()));
    }
    let scale = if clip > 0.0 && norm > clip { (clip / norm) as f32 } else { 1.0 };
    for (name, mut g) in summed {
        if scale != 1.0 {
            g.iter_mut().for_each(|x| *x *= scale);
        }
        let t = params.get_mut(&name).ok_or(ModelError::MissingParam(name))?;
        t.accumulate_grad(&g).map_err(ModelError::from)?;
    }
    sgd_step(params.iter_mut().filter(|(_, t)| t.grad().is_some()).map(|(n, t)| (n.as_str(), t)), lr as f32)
        .map_err(ModelError::from)?;
    Ok(())
}

struct ImagePass {
    tape: Tape,
    bound: Bound,
    out: Var,
}

fn image_pass(
    params: &ModelParams,
    backbone: &BackboneConfig,
    input: &Tensor,
    with_classifier: bool,
) -> Result<ImagePass, ModelError> {
    let mut tape = Tape::new();
    let prefixes: &[&str] = if with_classifier { &["image.", "classifier."] } else { &["image."] };
    let bound = bind_all(&mut tape, params, prefixes);
    let head_input = bind(&mut tape, params, "head_input.", false);
    let x = tape.constant(input.clone());
    let u = image_forward(&mut tape, &bound, backbone, x)?.u;
    let out = if with_classifier { classifier_logit(&mut tape, &bound, &head_input, u)? } else { u };
    Ok(ImagePass { tape, bound, out })
}

/// Loss and parameter gradients of the combined contrastive objective on
/// one batch of image inputs and standardized radiomics rows.
pub fn contrastive_batch_grads(
    params: &ModelParams,
    config: &TrainConfig,
    inputs: &[&Tensor],
    features: &[&[f32]],
) -> Result<(f64, Vec<Grads>), PipelineError> {
    let backbone = config.backbone();
    let mut passes: Vec<ImagePass> = inputs
        .par_iter()
        .map(|x| image_pass(params, &backbone, x, false))
        .collect::<Result<_, _>>()?;
    let u: Vec<Vec<f64>> =
        passes.iter().map(|p| p.tape.value(p.out).data().iter().map(|&x| x as f64).collect()).collect();

    let mut rtape = Tape::new();
    let rbound = bind(&mut rtape, params, "radiomics.", true);
    let flat: Vec<f32> = features.iter().flat_map(|r| r.iter().copied()).collect();
    let x = rtape.constant(Tensor::new(vec![features.len(), RADIOMICS_DIM], flat).map_err(ModelError::from)?);
    let v_var = radiomics_forward(&mut rtape, &rbound, x)?;
    let v_data = rtape.value(v_var).data();
    let dim = v_data.len() / features.len().max(1);
    let v: Vec<Vec<f64>> = v_data.chunks(dim).map(|r| r.iter().map(|&x| x as f64).collect()).collect();

    let lg = combined_loss_and_grad(&u, &v, &config.contrastive())
        .map_err(|e| PipelineError::Numeric(e.to_string()))?;
    if !lg.loss.is_finite() {
        return Ok((lg.loss, Vec::new()));
    }

    let mut grads: Vec<Grads> = passes
        .par_iter_mut()
        .zip(&lg.grad_u)
        .map(|(p, g)| {
            let seed: Vec<f32> = g.iter().map(|&x| x as f32).collect();
            p.tape.backward_with_seed(p.out, &seed).map_err(ModelError::from)?;
            Ok(take_grads(&mut p.tape, &p.bound))
        })
        .collect::<Result<_, PipelineError>>()?;
    let seed: Vec<f32> = lg.grad_v.iter().flatten().map(|&x| x as f32).collect();
    rtape.backward_with_seed(v_var, &seed).map_err(ModelError::from)?;
    grads.push(take_grads(&mut rtape, &rbound));
    Ok((lg.loss, grads))
}

/// Mean cross-entropy and parameter gradients of the image classifier on
/// one batch.
pub fn finetune_batch_grads(
    params: &ModelParams,
    config: &TrainConfig,
    inputs: &[&Tensor],
    labels: &[u8],
) -> Result<(f64, Vec<Grads>), PipelineError> {
    let backbone = config.backbone();
    let mut passes: Vec<ImagePass> = inputs
        .par_iter()
        .map(|x| image_pass(params, &backbone, x, true))
        .collect::<Result<_, _>>()?;
    let probs: Vec<f64> =
        passes.iter().map(|p| crate::model::stable_sigmoid(p.tape.value(p.out).item() as f64)).collect();
    let loss = finetune_loss(&probs, labels).map_err(|e| PipelineError::Numeric(e.to_string()))?;
    if !loss.is_finite() {
        return Ok((loss, Vec::new()));
    }
    let seeds = finetune_logit_grad(&probs, labels);
    let grads = passes
        .par_iter_mut()
        .zip(&seeds)
        .map(|(p, &s)| {
            p.tape.backward_with_seed(p.out, &[s as f32]).map_err(ModelError::from)?;
            Ok(take_grads(&mut p.tape, &p.bound))
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok((loss, grads))
}

/// Samples of the dataset with their split under `seed`.
pub fn split_samples(samples: &[Sample], seed: u64) -> Result<(DatasetSplit, Vec<&Sample>, Vec<&Sample>), PipelineError> {
    let split = split_dataset(samples, seed)?;
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let pick = |ids: &[String]| ids.iter().map(|id| by_id[id.as_str()]).collect::<Vec<_>>();
    let (train, test) = (pick(&split.train_ids), pick(&split.test_ids));
    Ok((split, train, test))
}

fn epoch_seed(seed: u64, phase: &str, epoch: usize) -> u64 {
    substream(seed, &format!("{phase}/epoch{epoch}")).next_u64()
}

fn check_finite(loss: f64, batch: &[usize], samples: &[&Sample]) -> Result<(), PipelineError> {
    if loss.is_finite() {
        return Ok(());
    }
    let ids: Vec<&str> = batch.iter().map(|&i| samples[i].id.as_str()).collect();
    Err(PipelineError::Numeric(format!("non-finite loss {loss} on batch [{}]", ids.join(", "))))
}

/// Raw radiomics vectors of `samples`, computed in parallel.
pub fn radiomics_rows(samples: &[&Sample], bins: usize) -> Result<Vec<Vec<f64>>, PipelineError> {
    let cfg = crate::radiomics::RadiomicsConfig { bins };
    samples
        .par_iter()
        .map(|s| {
            extract_radiomics(&s.image, s.bbox.as_ref(), &cfg)
                .map(|v| v.values)
                .map_err(|e| PipelineError::Data(crate::data::DataError::Invalid(format!("{}: {e}", s.id))))
        })
        .collect()
}

/// Contrastive pretraining of both towers on the training split.
pub fn pretrain(samples: &[Sample], config: &TrainConfig) -> Result<Checkpoint, PipelineError> {
    config.validate()?;
    if config.batch_size < 2 {
        return Err(PipelineError::Usage(format!("contrastive batch size must be at least 2, got {}", config.batch_size)));
    }
    let backbone = config.backbone();
    let (_, train, _) = split_samples(samples, config.seed)?;
    if train.len() < config.batch_size {
        return Err(PipelineError::Usage(format!(
            "training split has {} samples, fewer than batch size {}",
            train.len(),
            config.batch_size
        )));
    }
    let raw = radiomics_rows(&train, config.bins)?;
    let stats = FeatureStats::fit(&raw);
    let features: Vec<Vec<f32>> = raw.iter().map(|r| stats.apply(r)).collect();
    let inputs: Vec<Tensor> = train.iter().map(|s| image_input(&s.image, &backbone)).collect();

    let mut params = init_params(&backbone, config.seed);
    let mut history = TrainingHistory::default();
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.max_epochs {
        let batches =
            make_batches(&order, config.batch_size, epoch_seed(config.seed, "pretrain", epoch), BatchMode::Contrastive)?;
        let mut total = 0.0;
        for batch in &batches {
            let xs: Vec<&Tensor> = batch.iter().map(|&i| &inputs[i]).collect();
            let fs: Vec<&[f32]> = batch.iter().map(|&i| features[i].as_slice()).collect();
            let (loss, grads) = contrastive_batch_grads(&params, config, &xs, &fs)?;
            check_finite(loss, batch, &train)?;
            apply_grads(&mut params, grads, config.lr, config.grad_clip)?;
            total += loss;
        }
        let mean = total / batches.len() as f64;
        log::info!("pretrain epoch {} loss {mean:.6}", epoch + 1);
        history.pretrain_loss.push(mean);
        if stopper.update(mean) {
            log::info!("pretrain stopped early after epoch {}", epoch + 1);
            break;
        }
    }
    Ok(Checkpoint { phase: Phase::Pretrained, config: config.clone(), feature_stats: Some(stats), history, params })
}

/// Supervised fine-tuning of the image tower plus a new linear head. Starts
/// from `pretrained` when given, from a fresh initialization otherwise.
/// Architecture settings always come from the pretrained checkpoint.
pub fn finetune(
    samples: &[Sample],
    pretrained: Option<&Checkpoint>,
    config: &TrainConfig,
) -> Result<Checkpoint, PipelineError> {
    let mut config = config.clone();
    let (mut params, feature_stats, mut history) = match pretrained {
        Some(ckpt) => {
            if ckpt.phase != Phase::Pretrained {
                return Err(PipelineError::Usage("fine-tuning needs a pretrained checkpoint".into()));
            }
            let arch = &ckpt.config;
            config.resolution = arch.resolution;
            config.stem_channels = arch.stem_channels;
            config.stage_channels = arch.stage_channels.clone();
            config.attention_modules = arch.attention_modules;
            config.bins = arch.bins;
            (ckpt.params.clone(), ckpt.feature_stats.clone(), ckpt.history.clone())
        }
        None => (init_params(&config.backbone(), config.seed), None, TrainingHistory::default()),
    };
    config.validate()?;
    init_classifier(&mut params);
    history.finetune_loss.clear();

    let backbone = config.backbone();
    let (_, train, _) = split_samples(samples, config.seed)?;
    let inputs: Vec<Tensor> = train.iter().map(|s| image_input(&s.image, &backbone)).collect();
    let embeddings: Vec<Vec<f32>> =
        train.par_iter().map(|s| encode_image(&s.image, &params, &backbone)).collect::<Result<_, _>>()?;
    fit_head_input(&mut params, &embeddings);
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.max_epochs {
        let batches =
            make_batches(&order, config.batch_size, epoch_seed(config.seed, "finetune", epoch), BatchMode::KeepPartial)?;
        let mut total = 0.0;
        for batch in &batches {
            let xs: Vec<&Tensor> = batch.iter().map(|&i| &inputs[i]).collect();
            let ys: Vec<u8> = batch.iter().map(|&i| train[i].label).collect();
            let (loss, grads) = finetune_batch_grads(&params, &config, &xs, &ys)?;
            check_finite(loss, batch, &train)?;
            apply_grads(&mut params, grads, config.lr, config.grad_clip)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / train.len() as f64;
        log::info!("finetune epoch {} loss {mean:.6}", epoch + 1);
        history.finetune_loss.push(mean);
        if stopper.update(mean) {
            log::info!("finetune stopped early after epoch {}", epoch + 1);
            break;
        }
    }
    Ok(Checkpoint { phase: Phase::Finetuned, config, feature_stats, history, params })
}

/// Positive-class probabilities from the image alone.
pub fn predict(samples: &[&Sample], ckpt: &Checkpoint) -> Result<Vec<f64>, PipelineError> {
    let backbone = ckpt.config.backbone();
    samples
        .par_iter()
        .map(|s| {
            let u = encode_image(&s.image, &ckpt.params, &backbone)?;
            Ok(classify(&u, &ckpt.params)?)
        })
        .collect()
}

/// Metrics on the test split of `samples` under the checkpoint's seed.
pub fn evaluate(samples: &[Sample], ckpt: &Checkpoint) -> Result<MetricsReport, PipelineError> {
    if ckpt.phase != Phase::Finetuned {
        return Err(PipelineError::Usage("evaluation needs a fine-tuned checkpoint".into()));
    }
    let (_, _, test) = split_samples(samples, ckpt.config.seed)?;
    let probs = predict(&test, ckpt)?;
    let scores: Vec<(f64, u8)> = probs.into_iter().zip(test.iter().map(|s| s.label)).collect();
    if probs_single_class(&scores) {
        log::warn!("test split holds a single class; AUC is undefined");
    }
    Ok(MetricsReport::from_scores(
        &scores,
        ckpt.history.pretrain_loss.clone(),
        ckpt.history.finetune_loss.clone(),
    ))
}

fn probs_single_class(scores: &[(f64, u8)]) -> bool {
    scores.iter().all(|s| s.1 == scores[0].1)
}

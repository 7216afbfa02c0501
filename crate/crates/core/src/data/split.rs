use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Sample};
use crate::rng::substream;

pub const TRAIN_FRACTION: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Seeded, label-stratified 75/25 split. The train size is always
/// `round(0.75 * n)`; per-class quotas use largest remainders. Falls back
/// to a plain shuffle when a class has fewer than two samples.
pub fn split_dataset(samples: &[Sample], seed: u64) -> Result<DatasetSplit, DataError> {
    let n = samples.len();
    if n < 4 {
        return Err(DataError::Invalid(format!("need at least 4 samples to split, got {n}")));
    }
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut rng = substream(seed, "split");

    let mut classes: Vec<Vec<String>> = vec![Vec::new(), Vec::new()];
    for s in samples {
        classes[(s.label != 0) as usize].push(s.id.clone());
    }
    let stratify = classes.iter().all(|c| c.len() >= 2);
    if !stratify {
        log::warn!("split: a class has fewer than 2 samples, using an unstratified shuffle");
        classes = vec![samples.iter().map(|s| s.id.clone()).collect()];
    }

    let quotas: Vec<f64> = classes.iter().map(|c| c.len() as f64 * n_train as f64 / n as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let mut missing = n_train - take.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if take[c] < classes[c].len() {
            take[c] += 1;
            missing -= 1;
        }
    }

    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (c, ids) in classes.iter_mut().enumerate() {
        ids.shuffle(&mut rng);
        train_ids.extend_from_slice(&ids[..take[c]]);
        test_ids.extend_from_slice(&ids[take[c]..]);
    }
    train_ids.shuffle(&mut rng);
    test_ids.shuffle(&mut rng);
    Ok(DatasetSplit { train_ids, test_ids, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchMode {
    /// Fixed batch size; the final partial batch is dropped.
    Contrastive,
    /// Every item is used; the final batch may be smaller.
    KeepPartial,
}

/// Seeded per-epoch shuffle of `items` chunked into batches.
pub fn make_batches<T: Clone>(
    items: &[T],
    batch_size: usize,
    epoch_seed: u64,
    mode: BatchMode,
) -> Result<Vec<Vec<T>>, DataError> {
    if batch_size == 0 || (mode == BatchMode::Contrastive && batch_size < 2) {
        return Err(DataError::Config(format!("batch size {batch_size} is too small for {mode:?} batches")));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut substream(epoch_seed, "batches"));
    Ok(shuffled
        .chunks(batch_size)
        .filter(|c| mode == BatchMode::KeepPartial || c.len() == batch_size)
        .map(<[T]>::to_vec)
        .collect())
}

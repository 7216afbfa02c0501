//! Accuracy, F1 and ROC AUC at a fixed 0.5 decision threshold.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Counts with prediction `p > threshold` as positive.
    pub fn from_scores(scores: &[(f64, u8)], threshold: f64) -> Self {
        let mut c = Self::default();
        for &(p, y) in scores {
            match (p > threshold, y != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    /// `2 TP / (2 TP + FP + FN)`, 0 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Area under the ROC curve: the fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half. `None` unless both classes
/// are present. Sorts once and counts ties by group.
pub fn roc_auc(scores: &[(f64, u8)]) -> Option<f64> {
    let pos = scores.iter().filter(|s| s.1 != 0).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, u8)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the concordant count plus ties, kept integral for exactness.
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let group_pos = sorted[i..j].iter().filter(|s| s.1 != 0).count() as u64;
        let group_neg = (j - i) as u64 - group_pos;
        twice += group_pos * (2 * neg_below + group_neg);
        neg_below += group_neg;
        i = j;
    }
    Some(twice as f64 / (2 * pos as u64 * neg as u64) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    /// `None` when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub n_samples: usize,
    pub pretrain_loss: Vec<f64>,
    pub finetune_loss: Vec<f64>,
}

impl MetricsReport {
    pub fn from_scores(scores: &[(f64, u8)], pretrain_loss: Vec<f64>, finetune_loss: Vec<f64>) -> Self {
        let confusion = Confusion::from_scores(scores, 0.5);
        Self {
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
            auc: roc_auc(scores),
            confusion,
            n_samples: scores.len(),
            pretrain_loss,
            finetune_loss,
        }
    }
}

//! Bidirectional image/radiomics contrastive losses and the fine-tuning
//! cross-entropy.
//!
//! Everything here runs in `f64` on plain embedding rows. The gradient of
//! the combined loss with respect to both embedding matrices is returned in
//! closed form and fed back into the encoder tapes as a seed.

use serde::{Deserialize, Serialize};

/// Clamp applied to predicted probabilities before the cross-entropy.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("invalid contrastive config: {0}")]
    Config(String),
    #[error("embedding shape error: {0}")]
    Shape(String),
    #[error("non-finite embedding in row {row}")]
    NonFinite { row: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKernel {
    /// `-d_p(u, v)`: closer pairs score higher.
    NegDistance,
    /// `d_p(u, v)` as written literally in the loss.
    RawDistance,
    /// `u . v`
    DotProduct,
}

impl std::str::FromStr for SimilarityKernel {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neg_distance" => Ok(Self::NegDistance),
            "raw_distance" => Ok(Self::RawDistance),
            "dot_product" | "dot" => Ok(Self::DotProduct),
            other => Err(ObjectiveError::Config(format!("unknown similarity kernel {other:?}"))),
        }
    }
}

impl std::fmt::Display for SimilarityKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NegDistance => "neg_distance",
            Self::RawDistance => "raw_distance",
            Self::DotProduct => "dot_product",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub tau: f64,
    pub p: f64,
    pub lambda: f64,
    pub kernel: SimilarityKernel,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { tau: 0.1, p: 2.0, lambda: 0.5, kernel: SimilarityKernel::NegDistance }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ObjectiveError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(ObjectiveError::Config(format!("p must be >= 1, got {}", self.p)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ObjectiveError::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `(sum |u_i - v_i|^p)^(1/p)`.
pub fn p_distance(u: &[f64], v: &[f64], p: f64) -> f64 {
    let diffs = u.iter().zip(v).map(|(a, b)| (a - b).abs());
    if p == 1.0 {
        diffs.sum()
    } else if p == 2.0 {
        diffs.map(|d| d * d).sum::<f64>().sqrt()
    } else {
        diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `d d_p / d u`, zero at `u == v`.
fn p_distance_grad(u: &[f64], v: &[f64], p: f64, dist: f64) -> Vec<f64> {
    if dist == 0.0 {
        return vec![0.0; u.len()];
    }
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            if d == 0.0 {
                0.0
            } else if p == 1.0 {
                d.signum()
            } else {
                d.signum() * (d.abs() / dist).powf(p - 1.0)
            }
        })
        .collect()
}

pub fn score(u: &[f64], v: &[f64], config: &ContrastiveConfig) -> f64 {
    match config.kernel {
        SimilarityKernel::NegDistance => -p_distance(u, v, config.p),
        SimilarityKernel::RawDistance => p_distance(u, v, config.p),
        SimilarityKernel::DotProduct => u.iter().zip(v).map(|(a, b)| a * b).sum(),
    }
}

/// Gradients of `score(u, v)` with respect to `u` and `v`.
fn score_grad(u: &[f64], v: &[f64], config: &ContrastiveConfig) -> (Vec<f64>, Vec<f64>) {
    match config.kernel {
        SimilarityKernel::DotProduct => (v.to_vec(), u.to_vec()),
        kernel => {
            let sign = if kernel == SimilarityKernel::NegDistance { -1.0 } else { 1.0 };
            let g = p_distance_grad(u, v, config.p, p_distance(u, v, config.p));
            (g.iter().map(|x| sign * x).collect(), g.iter().map(|x| -sign * x).collect())
        }
    }
}

fn check_batch(u: &[Vec<f64>], v: &[Vec<f64>]) -> Result<(), ObjectiveError> {
    if u.is_empty() || u.len() != v.len() {
        return Err(ObjectiveError::Shape(format!("batch sizes {} and {}", u.len(), v.len())));
    }
    let d = u[0].len();
    for (row, (a, b)) in u.iter().zip(v).enumerate() {
        if a.len() != d || b.len() != d {
            return Err(ObjectiveError::Shape(format!("row {row} has dims {} and {}, expected {d}", a.len(), b.len())));
        }
        if !a.iter().chain(b).all(|x| x.is_finite()) {
            return Err(ObjectiveError::NonFinite { row });
        }
    }
    Ok(())
}

/// `S[a][b] = score(u_a, v_b) / tau`.
fn score_matrix(u: &[Vec<f64>], v: &[Vec<f64>], config: &ContrastiveConfig) -> Vec<Vec<f64>> {
    u.iter().map(|ua| v.iter().map(|vb| score(ua, vb, config) / config.tau).collect()).collect()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `-log softmax(xs)[target]`, arranged as `(max - x_t) + log sum exp(x - max)`
/// so equal scores give exactly `log N`.
fn neg_log_softmax(xs: impl Iterator<Item = f64> + Clone, target: f64) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    ((max - target) + xs.map(|x| (x - max).exp()).sum::<f64>().ln()).max(0.0)
}

/// Row-wise (image-to-radiomics) and column-wise (radiomics-to-image)
/// per-sample losses from a score matrix.
fn directional_losses(s: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = s.len();
    let rows = (0..n).map(|i| neg_log_softmax(s[i].iter().copied(), s[i][i])).collect();
    let cols = (0..n).map(|i| neg_log_softmax((0..n).map(|k| s[k][i]), s[i][i])).collect();
    (rows, cols)
}

/// `L_i = -log( exp(s(u_i, v_i)/tau) / sum_k exp(s(u_i, v_k)/tau) )`.
pub fn image_to_radiomics_loss(
    u: &[Vec<f64>],
    v: &[Vec<f64>],
    config: &ContrastiveConfig,
) -> Result<Vec<f64>, ObjectiveError> {
    config.validate()?;
    check_batch(u, v)?;
    Ok(directional_losses(&score_matrix(u, v, config)).0)
}

/// Mirror of [`image_to_radiomics_loss`]: the denominator ranges over `u_k`.
pub fn radiomics_to_image_loss(
    u: &[Vec<f64>],
    v: &[Vec<f64>],
    config: &ContrastiveConfig,
) -> Result<Vec<f64>, ObjectiveError> {
    config.validate()?;
    check_batch(u, v)?;
    Ok(directional_losses(&score_matrix(u, v, config)).1)
}

/// `(1/N) sum_i [lambda L_i(u->v) + (1 - lambda) L_i(v->u)]`.
pub fn combined_loss(u: &[Vec<f64>], v: &[Vec<f64>], config: &ContrastiveConfig) -> Result<f64, ObjectiveError> {
    Ok(combined_loss_and_grad(u, v, config)?.loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad_u: Vec<Vec<f64>>,
    pub grad_v: Vec<Vec<f64>>,
}

/// Combined loss with its exact gradient. With `P` the row softmax and `Q`
/// the column softmax of `S`,
/// `dL/dS_ab = (lambda (P_ab - [a=b]) + (1 - lambda) (Q_ab - [a=b])) / N`.
pub fn combined_loss_and_grad(
    u: &[Vec<f64>],
    v: &[Vec<f64>],
    config: &ContrastiveConfig,
) -> Result<LossAndGrad, ObjectiveError> {
    config.validate()?;
    check_batch(u, v)?;
    let n = u.len();
    let nf = n as f64;
    let s = score_matrix(u, v, config);
    let (rows, cols) = directional_losses(&s);
    let lambda = config.lambda;
    // Running mean: exact when all per-sample terms are equal.
    let mut loss = 0.0;
    for (k, (a, b)) in rows.iter().zip(&cols).enumerate() {
        loss += (lambda * a + (1.0 - lambda) * b - loss) / (k + 1) as f64;
    }

    let row_lse: Vec<f64> = s.iter().map(|r| log_sum_exp(r.iter().copied())).collect();
    let col_lse: Vec<f64> = (0..n).map(|b| log_sum_exp((0..n).map(|a| s[a][b]))).collect();
    let d = u[0].len();
    let mut grad_u = vec![vec![0.0; d]; n];
    let mut grad_v = vec![vec![0.0; d]; n];
    for a in 0..n {
        for b in 0..n {
            let delta = if a == b { 1.0 } else { 0.0 };
            let p = (s[a][b] - row_lse[a]).exp();
            let q = (s[a][b] - col_lse[b]).exp();
            let ds = (lambda * (p - delta) + (1.0 - lambda) * (q - delta)) / nf / config.tau;
            if ds == 0.0 {
                continue;
            }
            let (gu, gv) = score_grad(&u[a], &v[b], config);
            for j in 0..d {
                grad_u[a][j] += ds * gu[j];
                grad_v[b][j] += ds * gv[j];
            }
        }
    }
    Ok(LossAndGrad { loss, grad_u, grad_v })
}

/// Mean binary cross-entropy with predictions clamped to
/// `[PROB_EPSILON, 1 - PROB_EPSILON]`.
pub fn finetune_loss(y_pred: &[f64], y_true: &[u8]) -> Result<f64, ObjectiveError> {
    if y_pred.is_empty() || y_pred.len() != y_true.len() {
        return Err(ObjectiveError::Shape(format!("{} predictions for {} labels", y_pred.len(), y_true.len())));
    }
    let total: f64 = y_pred
        .iter()
        .zip(y_true)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
            if y != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / y_pred.len() as f64)
}

/// Gradient of [`finetune_loss`] with respect to the logits `z`, where
/// `y_pred = sigmoid(z)`: `(y_pred - y) / N` inside the clamp, 0 outside.
pub fn finetune_logit_grad(y_pred: &[f64], y_true: &[u8]) -> Vec<f64> {
    let n = y_pred.len() as f64;
    y_pred
        .iter()
        .zip(y_true)
        .map(|(&p, &y)| {
            if p < PROB_EPSILON || p > 1.0 - PROB_EPSILON {
                0.0
            } else {
                (p - y as f64) / n
            }
        })
        .collect()
}

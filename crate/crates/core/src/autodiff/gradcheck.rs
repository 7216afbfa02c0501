//! Central finite-difference checking of tape gradients.

use super::{Tape, Tensor, TensorError, Var};

/// Outcome of a gradient check, one entry per input.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
    /// Coordinates whose forward and backward one-sided slopes disagree,
    /// meaning a ReLU or max-pool switch lies inside the stencil.
    pub kinked: Vec<Vec<bool>>,
}

impl GradCheck {
    /// Largest norm-wise relative error `|a - n| / max(|a|, |n|)` over inputs.
    /// Inputs whose gradients are both below `floor` in norm count as exact.
    pub fn max_relative_error(&self, floor: f64) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| relative_error(a, n, floor))
            .fold(0.0, f64::max)
    }

    /// Norm-wise relative error over all inputs jointly, skipping kinked
    /// coordinates. Also returns the fraction of coordinates skipped.
    pub fn smooth_relative_error(&self, floor: f64) -> (f64, f64) {
        let (mut a, mut n) = (Vec::new(), Vec::new());
        let mut total = 0usize;
        for ((ai, ni), ki) in self.analytic.iter().zip(&self.numeric).zip(&self.kinked) {
            for ((&x, &y), &k) in ai.iter().zip(ni).zip(ki) {
                total += 1;
                if !k {
                    a.push(x);
                    n.push(y);
                }
            }
        }
        let skipped = (total - a.len()) as f64 / total.max(1) as f64;
        (relative_error(&a, &n, floor), skipped)
    }
}

pub fn relative_error(a: &[f64], n: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(n));
    if scale < floor {
        0.0
    } else {
        diff / scale
    }
}

/// Compares backward-pass gradients of the scalar built by `f` against
/// central differences with step `h`, perturbing every input coordinate.
pub fn check_gradients<F>(inputs: &[Tensor], h: f32, f: F) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root).item() as f64)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| match tape.grad(v) {
            Some(g) => g.iter().map(|&x| x as f64).collect(),
            None => vec![0.0; t.numel()],
        })
        .collect();

    let center = eval(inputs)?;
    // Rounding noise of one f32 evaluation, as a slope.
    let noise = 1e-6 * center.abs().max(1.0) / h as f64;
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut kinked = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for which in 0..inputs.len() {
        let mut col = Vec::with_capacity(inputs[which].numel());
        let mut kinks = Vec::with_capacity(inputs[which].numel());
        for j in 0..inputs[which].numel() {
            let orig = inputs[which].data()[j];
            work[which].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[which].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[which].data_mut()[j] = orig;
            // Divide by the steps actually representable in f32.
            let (up, down) = ((orig + h) as f64 - orig as f64, orig as f64 - (orig - h) as f64);
            col.push((plus - minus) / (up + down));
            let (fwd, bwd) = ((plus - center) / up, (center - minus) / down);
            kinks.push((fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()) + noise);
        }
        numeric.push(col);
        kinked.push(kinks);
    }
    Ok(GradCheck { analytic, numeric, kinked })
}

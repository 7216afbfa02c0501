use super::{Tensor, TensorError};

/// Plain SGD: `param <- param - lr * grad`, then zeroes the gradient.
///
/// Every parameter must carry a gradient; nothing is updated otherwise.
pub fn sgd_step<'a, I>(params: I, lr: f32) -> Result<(), TensorError>
where
    I: IntoIterator<Item = (&'a str, &'a mut Tensor)>,
{
    let params: Vec<(&str, &mut Tensor)> = params.into_iter().collect();
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(TensorError::Contract(format!("parameter `{name}` has no gradient")));
    }
    for (_, t) in params {
        let grad = t.take_grad().expect("checked above");
        t.data_mut().iter_mut().zip(&grad).for_each(|(w, g)| *w -= lr * g);
        t.accumulate_grad(&vec![0.0; grad.len()])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let mut p = Tensor::scalar(1.0);
        p.accumulate_grad(&[0.5]).unwrap();
        sgd_step([("w", &mut p)], 0.1).unwrap();
        assert!((p.item() - 0.95).abs() < 1e-7);
        assert_eq!(p.grad().unwrap(), &[0.0]);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        p.accumulate_grad(&[3.0, 4.0]).unwrap();
        sgd_step([("w", &mut p)], 0.0).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn quadratic_two_steps() {
        // f(x) = x^2, grad 2x, x <- x(1 - 2 lr)
        let mut x = Tensor::scalar(1.0);
        for _ in 0..2 {
            let g = 2.0 * x.item();
            x.zero_grad();
            x.accumulate_grad(&[g]).unwrap();
            sgd_step([("x", &mut x)], 0.1).unwrap();
        }
        assert!((x.item() - 0.64).abs() < 1e-6);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        a.accumulate_grad(&[1.0]).unwrap();
        let err = sgd_step([("a", &mut a), ("stage1.conv", &mut b)], 0.1).unwrap_err();
        assert!(err.to_string().contains("stage1.conv"));
        assert_eq!(a.item(), 1.0, "no partial update");
    }
}

use crate::error::Result;
use crate::math::Matrix;

use super::{backward, forward, LstmParams};

/// Largest relative disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Per tensor, in [`LstmParams::tensor_names`] order.
    pub per_tensor: Vec<(String, f64)>,
}

/// Compares [`backward`] against central differences of the squared error
/// `(forward(window) − target)²`, perturbing every parameter by `±eps`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check(
    p: &LstmParams,
    window: &Matrix,
    target: f64,
    eps: f64,
) -> Result<GradientCheck> {
    let (pred, cache) = forward(p, window)?;
    let analytic = backward(p, &cache, 2.0 * (pred - target))?;
    let loss = |q: &LstmParams| -> Result<f64> {
        let (y, _) = forward(q, window)?;
        Ok((y - target) * (y - target))
    };

    let mut probe = p.clone();
    let names = LstmParams::tensor_names();
    let mut per_tensor = Vec::with_capacity(names.len());
    let mut worst: f64 = 0.0;
    for (ti, name) in names.into_iter().enumerate() {
        let len = p.tensors()[ti].len();
        let mut tensor_worst: f64 = 0.0;
        for k in 0..len {
            let orig = probe.tensors()[ti][k];
            probe.tensors_mut()[ti][k] = orig + eps;
            let up = loss(&probe)?;
            probe.tensors_mut()[ti][k] = orig - eps;
            let down = loss(&probe)?;
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.tensors()[ti][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            tensor_worst = tensor_worst.max(rel);
        }
        worst = worst.max(tensor_worst);
        per_tensor.push((name, tensor_worst));
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        per_tensor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    #[test]
    fn analytic_gradients_match_central_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let p = LstmParams::init(3, 4, &mut rng).unwrap();
            let data = (0..15).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
            let w = Matrix::from_vec(5, 3, data).unwrap();
            let target = rng.uniform(-1.0, 1.0).unwrap();
            let r = gradient_check(&p, &w, target, 1e-5).unwrap();
            assert!(
                r.max_relative_error < 1e-4,
                "seed {seed}: {:?}",
                r.per_tensor
            );
            assert_eq!(r.per_tensor.len(), 14);
        }
    }
}

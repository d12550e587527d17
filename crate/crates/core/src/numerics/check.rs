//! Central finite-difference gradient checking.
//!
//! The checker only calls a graph's forward pass, so it stays independent of
//! the reverse sweep it is used to validate.

use crate::error::Result;
use crate::numerics::Tensor;

/// Step size used throughout the gradient-check suites.
pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of `f` w.r.t. every element of every
/// input tensor: `(f(x+h) − f(x−h)) / 2h`.
pub fn finite_difference<F>(f: F, inputs: &[Tensor], h: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let mut grads = Vec::with_capacity(inputs.len());
    for (ti, t) in inputs.iter().enumerate() {
        let mut g = vec![0.0; t.numel()];
        for (ei, slot) in g.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[ti].data_mut()[ei] += h;
            let mut minus = inputs.to_vec();
            minus[ti].data_mut()[ei] -= h;
            *slot = (f(&plus)? - f(&minus)?) / (2.0 * h);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Relative error with an absolute floor, so near-zero gradient pairs do not
/// blow up the ratio.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Largest relative error between analytic and finite-difference gradients.
pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (ga, gn) in analytic.iter().zip(numeric) {
        for (&a, &n) in ga.iter().zip(gn) {
            worst = worst.max(relative_error(a, n));
        }
    }
    worst
}

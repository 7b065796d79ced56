//! Finite-difference verification of analytic gradients.
//!
//! Central differences in `f64` at a fixed step, compared against the
//! backward pass running in `f64` through the same generic ops. Checks must
//! keep inputs away from ReLU kinks and max-pool ties, where the true
//! derivative is discontinuous and the comparison is meaningless.

/// Step used throughout the gradient suite.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Central-difference gradient of a scalar-valued function, one coordinate
/// at a time: `(f(x+h) - f(x-h)) / 2h`.
pub fn numerical_grad<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut xs = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + step;
        let plus = f(&xs);
        xs[i] = orig - step;
        let minus = f(&xs);
        xs[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst relative error between two gradient vectors. The denominator is
/// floored at 1e-3 so exact zeros compare in (scaled) absolute terms instead
/// of dividing by themselves.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = sum(x^2), grad = 2x
        let x = vec![1.0, -2.0, 0.5];
        let g = numerical_grad(|v| v.iter().map(|a| a * a).sum(), &x, DEFAULT_STEP);
        let analytic: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(max_rel_error(&analytic, &g) < 1e-6);
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = vec![1.0, 2.0];
        let g = numerical_grad(|v| v.iter().map(|a| a * a).sum(), &x, DEFAULT_STEP);
        let wrong = vec![2.0, 3.0]; // second entry should be 4
        assert!(max_rel_error(&wrong, &g) > 0.1);
    }

    #[test]
    fn zero_gradients_compare_clean() {
        assert!(max_rel_error(&[0.0, 0.0], &[0.0, 1e-12]) < 1e-4);
    }
}

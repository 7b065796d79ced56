//! Softmax cross-entropy over the 2-unit output.
//!
//! The log-sum-exp is computed with max subtraction and `ln_1p`, so the loss
//! stays accurate for any finite logits (including very confident ones where
//! a naive `ln(sum)` would round to 0).

use crate::error::{Error, Result};
use crate::tensor::{Scalar, TensorOf};

/// Returns `(loss, grad_logits)` where `loss = -log(softmax(logits)[label])`
/// and `grad_logits = softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &TensorOf<T>,
    label: usize,
) -> Result<(T, TensorOf<T>)> {
    let x = logits.data();
    if label >= x.len() {
        return Err(Error::Contract(format!(
            "label {label} out of range for {} logits",
            x.len()
        )));
    }
    if !logits.all_finite() {
        return Err(Error::Numeric("non-finite logits in loss".into()));
    }

    let (argmax, max) = x
        .iter()
        .enumerate()
        .fold((0usize, T::neg_infinity()), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });

    // lse = max + ln(1 + sum_{i != argmax} exp(x_i - max))
    let rest = x
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != argmax)
        .fold(T::zero(), |acc, (_, &v)| acc + (v - max).exp());
    let lse = max + rest.ln_1p();

    let loss = lse - x[label];
    let grad: Vec<T> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let p = (v - lse).exp();
            if i == label {
                p - T::one()
            } else {
                p
            }
        })
        .collect();
    Ok((loss, TensorOf::new(vec![x.len()], grad)?))
}

/// Numerically stable softmax; the output sums to 1 within 1e-6 for logits
/// with magnitude up to 1e4.
pub fn softmax<T: Scalar>(logits: &TensorOf<T>) -> TensorOf<T> {
    let x = logits.data();
    let max = x.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    TensorOf::new(
        logits.shape().to_vec(),
        exps.into_iter().map(|e| e / sum).collect(),
    )
    .expect("softmax preserves shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tensor, TensorOf};

    #[test]
    fn symmetric_logits() {
        let logits = Tensor::from_vec(vec![0.0, 0.0]);
        let (loss, grad) = softmax_cross_entropy(&logits, 0).unwrap();
        assert!((loss - std::f32::consts::LN_2).abs() < 1e-6, "loss = {loss}");
        assert!((grad.data()[0] + 0.5).abs() < 1e-6);
        assert!((grad.data()[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_prediction() {
        // loss = log(1 + e^{-20}) ~= 2.061e-9; ln_1p keeps the tiny value.
        let logits = TensorOf::<f64>::from_vec(vec![10.0, -10.0]);
        let (loss, _) = softmax_cross_entropy(&logits, 0).unwrap();
        let expected = (-20.0f64).exp().ln_1p();
        assert!((loss - expected).abs() < 1e-15, "loss = {loss:e}");
        assert!((loss - 2.061e-9).abs() < 1e-11);
    }

    #[test]
    fn stable_for_huge_logits() {
        let logits = Tensor::from_vec(vec![1e4, -1e4]);
        let (loss, grad) = softmax_cross_entropy(&logits, 1).unwrap();
        assert!(loss.is_finite());
        assert!(loss > 1000.0);
        let p = softmax(&logits);
        let sum: f32 = p.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(grad.all_finite());
    }

    #[test]
    fn gradient_is_softmax_minus_onehot() {
        let logits = Tensor::from_vec(vec![1.0, 2.0]);
        let (_, grad) = softmax_cross_entropy(&logits, 1).unwrap();
        let p = softmax(&logits);
        assert!((grad.data()[0] - p.data()[0]).abs() < 1e-6);
        assert!((grad.data()[1] - (p.data()[1] - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_label() {
        let logits = Tensor::from_vec(vec![0.0, 0.0]);
        assert!(softmax_cross_entropy(&logits, 2).is_err());
    }
}

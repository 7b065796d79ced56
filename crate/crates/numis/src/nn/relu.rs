//! Rectified linear unit. The subgradient at 0 is defined as 0: backward
//! passes gradient only where the forward input was strictly positive.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, TensorOf};

pub fn relu<T: Scalar>(input: &TensorOf<T>) -> TensorOf<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(
    grad_out: &TensorOf<T>,
    forward_input: &TensorOf<T>,
) -> Result<TensorOf<T>> {
    if grad_out.shape() != forward_input.shape() {
        return Err(Error::Contract(format!(
            "relu backward shape mismatch: {:?} vs {:?}",
            grad_out.shape(),
            forward_input.shape()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(forward_input.data().iter())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    TensorOf::new(grad_out.shape().to_vec(), data)
}

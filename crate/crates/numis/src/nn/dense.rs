//! Fully-connected layer: `y = W^T x + b` with weights stored `(fan_in, fan_out)`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, TensorOf};

fn check_dense_args<T: Scalar>(
    input: &TensorOf<T>,
    weights: &TensorOf<T>,
    bias: &TensorOf<T>,
) -> Result<(usize, usize)> {
    let [fan_in, fan_out] = *weights.shape() else {
        return Err(Error::Contract(format!(
            "dense weights must be rank-2, got {:?}",
            weights.shape()
        )));
    };
    if input.len() != fan_in || input.rank() != 1 {
        return Err(Error::Contract(format!(
            "dense input must be a vector of length {fan_in}, got shape {:?}",
            input.shape()
        )));
    }
    if bias.shape() != [fan_out] {
        return Err(Error::Contract(format!(
            "dense bias must be [{fan_out}], got {:?}",
            bias.shape()
        )));
    }
    Ok((fan_in, fan_out))
}

pub fn dense_forward<T: Scalar>(
    input: &TensorOf<T>,
    weights: &TensorOf<T>,
    bias: &TensorOf<T>,
) -> Result<TensorOf<T>> {
    let (_, fan_out) = check_dense_args(input, weights, bias)?;
    let mut out = bias.data().to_vec();
    for (&x, w_row) in input.data().iter().zip(weights.data().chunks_exact(fan_out)) {
        if x != T::zero() {
            for (o, &wv) in out.iter_mut().zip(w_row.iter()) {
                *o = *o + x * wv;
            }
        }
    }
    TensorOf::new(vec![fan_out], out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Scalar>(
    grad_out: &TensorOf<T>,
    input: &TensorOf<T>,
    weights: &TensorOf<T>,
) -> Result<(TensorOf<T>, TensorOf<T>, TensorOf<T>)> {
    let [fan_in, fan_out] = *weights.shape() else {
        return Err(Error::Contract("dense weights must be rank-2".into()));
    };
    if grad_out.len() != fan_out || input.len() != fan_in {
        return Err(Error::Contract(format!(
            "dense backward shape mismatch: input {}, grad_out {}, weights {:?}",
            input.len(),
            grad_out.len(),
            weights.shape()
        )));
    }
    let g = grad_out.data();

    // grad_w = outer(x, g); grad_x[i] = dot(w[i, :], g)
    let mut grad_w = vec![T::zero(); fan_in * fan_out];
    let mut grad_x = vec![T::zero(); fan_in];
    for ((&x, gw_row), (gx, w_row)) in input
        .data()
        .iter()
        .zip(grad_w.chunks_exact_mut(fan_out))
        .zip(grad_x.iter_mut().zip(weights.data().chunks_exact(fan_out)))
    {
        let mut acc = T::zero();
        for ((gw, &gv), &wv) in gw_row.iter_mut().zip(g.iter()).zip(w_row.iter()) {
            *gw = x * gv;
            acc = acc + wv * gv;
        }
        *gx = acc;
    }

    Ok((
        TensorOf::new(vec![fan_in], grad_x)?,
        TensorOf::new(vec![fan_in, fan_out], grad_w)?,
        TensorOf::new(vec![fan_out], g.to_vec())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn identity_weights_pass_through() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn forward_applies_bias() {
        let x = Tensor::from_vec(vec![1.0, 1.0]);
        let w = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_vec(vec![0.5, -0.5, 0.0]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[5.5, 6.5, 9.0]);
    }

    #[test]
    fn backward_is_outer_product_and_matvec() {
        let x = Tensor::from_vec(vec![2.0, 3.0]);
        let w = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = Tensor::from_vec(vec![10.0, 20.0]);
        let (gx, gw, gb) = dense_backward(&g, &x, &w).unwrap();
        // grad_x = W . g per row: [1*10+2*20, 3*10+4*20] = [50, 110]
        assert_eq!(gx.data(), &[50.0, 110.0]);
        // grad_w = outer(x, g)
        assert_eq!(gw.data(), &[20.0, 40.0, 30.0, 60.0]);
        assert_eq!(gb.data(), &[10.0, 20.0]);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let w = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let b = Tensor::zeros(&[2]);
        assert!(matches!(
            dense_forward(&x, &w, &b),
            Err(crate::error::Error::Contract(_))
        ));
    }
}

//! Max pooling over channel-last volumes.
//!
//! Each output element is the maximum of a k x k window per channel. The flat
//! input index of that maximum is recorded so the backward pass can route the
//! gradient to exactly one position. Ties go to the first index in row-major
//! scan order.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, TensorOf};

#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<u32>,
    in_shape: [usize; 3],
}

/// Pool forward; returns the pooled volume and the argmax indices.
pub fn maxpool_forward<T: Scalar>(
    input: &TensorOf<T>,
    k: usize,
    stride: usize,
) -> Result<(TensorOf<T>, PoolCache)> {
    let [h, w, c] = *input.shape() else {
        return Err(Error::Contract(format!(
            "maxpool input must be rank-3 HxWxC, got {:?}",
            input.shape()
        )));
    };
    if k > h || k > w {
        return Err(Error::Topology(format!(
            "maxpool window {k}x{k} exceeds {h}x{w} input"
        )));
    }
    if stride < 1 || k < 1 {
        return Err(Error::Contract("maxpool kernel and stride must be >= 1".into()));
    }
    let out_h = (h - k) / stride + 1;
    let out_w = (w - k) / stride + 1;
    let data = input.data();
    let mut out = vec![T::zero(); out_h * out_w * c];
    let mut argmax = vec![0u32; out_h * out_w * c];

    for oy in 0..out_h {
        for ox in 0..out_w {
            let base = (oy * out_w + ox) * c;
            for ch in 0..c {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for dy in 0..k {
                    let iy = oy * stride + dy;
                    for dx in 0..k {
                        let ix = ox * stride + dx;
                        let idx = (iy * w + ix) * c + ch;
                        let v = data[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                out[base + ch] = best;
                argmax[base + ch] = best_idx as u32;
            }
        }
    }

    Ok((
        TensorOf::new(vec![out_h, out_w, c], out)?,
        PoolCache {
            argmax,
            in_shape: [h, w, c],
        },
    ))
}

/// Route each gradient element to its recorded argmax position.
pub fn maxpool_backward<T: Scalar>(grad_out: &TensorOf<T>, cache: &PoolCache) -> Result<TensorOf<T>> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::Contract(format!(
            "maxpool grad_out has {} elements, expected {}",
            grad_out.len(),
            cache.argmax.len()
        )));
    }
    let mut grad_input = TensorOf::zeros(&cache.in_shape);
    let gi = grad_input.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(cache.argmax.iter()) {
        gi[idx as usize] = gi[idx as usize] + g;
    }
    Ok(grad_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn four_by_four_window_max() {
        // values 1..16 row-major, k=3, s=2 -> single output = max of rows 0-2 x cols 0-2 = 11
        let input = Tensor::new(vec![4, 4, 1], (1..=16).map(|i| i as f32).collect()).unwrap();
        let (out, _) = maxpool_forward(&input, 3, 2).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[11.0]);
    }

    #[test]
    fn seventeen_gives_eight() {
        let input = Tensor::zeros(&[17, 17, 2]);
        let (out, _) = maxpool_forward(&input, 3, 2).unwrap();
        assert_eq!(out.shape(), &[8, 8, 2]);
    }

    #[test]
    fn backward_routes_to_argmax_only() {
        let input = Tensor::new(vec![2, 2, 1], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let (out, cache) = maxpool_forward(&input, 2, 1).unwrap();
        assert_eq!(out.data(), &[5.0]);
        let grad_out = Tensor::new(vec![1, 1, 1], vec![7.0]).unwrap();
        let gi = maxpool_backward(&grad_out, &cache).unwrap();
        assert_eq!(gi.data(), &[0.0, 7.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_break_to_first_row_major_index() {
        let input = Tensor::filled(&[2, 2, 1], 4.0);
        let (_, cache) = maxpool_forward(&input, 2, 1).unwrap();
        let grad_out = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let gi = maxpool_backward(&grad_out, &cache).unwrap();
        assert_eq!(gi.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn oversized_window_is_topology_error() {
        let input = Tensor::zeros(&[2, 2, 1]);
        assert!(matches!(
            maxpool_forward(&input, 3, 2),
            Err(crate::error::Error::Topology(_))
        ));
    }
}

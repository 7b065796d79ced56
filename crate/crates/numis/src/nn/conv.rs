//! 2-D convolution over channel-last volumes, implemented via im2col.
//!
//! The forward pass lowers each input window into a row of a patch matrix so
//! the whole layer becomes one matmul: `out[P x D] = patches[P x K] * w[K x D]`
//! with `P = out_h * out_w` positions and `K = k * k * c_in` window elements.
//! Weights are stored `(k, k, c_in, depth)` row-major, which flattens to
//! exactly that `[K x D]` matrix. The backward pass reuses the cached patch
//! matrix: `grad_w = patches^T * grad_out`, `grad_patches = grad_out * w^T`,
//! and a col2im scatter-add folds `grad_patches` back onto the input grid.

use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::tensor::{matmul_acc, Scalar, TensorOf};

/// Everything the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    patches: Vec<T>,
    in_h: usize,
    in_w: usize,
    in_c: usize,
    out_h: usize,
    out_w: usize,
}

fn output_side(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = n + 2 * pad;
    if padded < k || (padded - k) / stride + 1 == 0 {
        return Err(Error::Topology(format!(
            "conv window k={k} stride={stride} pad={pad} does not fit input side {n}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn check_conv_args<T: Scalar>(
    input: &TensorOf<T>,
    layer: &LayerSpec,
    weights: &TensorOf<T>,
    bias: &TensorOf<T>,
) -> Result<(usize, usize, usize, usize)> {
    let [h, w, c] = *input.shape() else {
        return Err(Error::Contract(format!(
            "conv input must be rank-3 HxWxC, got {:?}",
            input.shape()
        )));
    };
    let k = layer.kernel_size;
    let d = layer.depth;
    if weights.shape() != [k, k, c, d] {
        return Err(Error::Contract(format!(
            "conv weights must be {:?}, got {:?}",
            [k, k, c, d],
            weights.shape()
        )));
    }
    if bias.shape() != [d] {
        return Err(Error::Contract(format!(
            "conv bias must be [{d}], got {:?}",
            bias.shape()
        )));
    }
    Ok((h, w, c, d))
}

/// Lower the (padded) input into the `[P x K]` patch matrix.
fn im2col<T: Scalar>(
    input: &TensorOf<T>,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let [h, w, c] = *input.shape() else { unreachable!() };
    let cols = k * k * c;
    let mut patches = vec![T::zero(); out_h * out_w * cols];
    let data = input.data();
    let row_stride = w * c;
    let run = k * c; // one kernel row of the window is contiguous in the input
    for oy in 0..out_h {
        for ox in 0..out_w {
            let patch = &mut patches[(oy * out_w + ox) * cols..(oy * out_w + ox + 1) * cols];
            for dy in 0..k {
                // Position in padded coordinates; skip rows that fall in padding.
                let py = oy * stride + dy;
                if py < pad || py >= h + pad {
                    continue;
                }
                let iy = py - pad;
                let px0 = ox * stride; // padded x of the window start
                let dest = &mut patch[dy * run..(dy + 1) * run];
                if px0 >= pad && px0 + k <= w + pad {
                    // fully in bounds: single contiguous copy
                    let ix0 = px0 - pad;
                    let src = &data[iy * row_stride + ix0 * c..iy * row_stride + (ix0 + k) * c];
                    dest.copy_from_slice(src);
                } else {
                    for dx in 0..k {
                        let px = px0 + dx;
                        if px < pad || px >= w + pad {
                            continue;
                        }
                        let ix = px - pad;
                        let src = &data[iy * row_stride + ix * c..iy * row_stride + (ix + 1) * c];
                        dest[dx * c..(dx + 1) * c].copy_from_slice(src);
                    }
                }
            }
        }
    }
    patches
}

/// Convolution forward pass, keeping the patch matrix for backward.
/// Activation is not applied here; it is a separate op.
pub fn conv2d_forward_cached<T: Scalar>(
    input: &TensorOf<T>,
    layer: &LayerSpec,
    weights: &TensorOf<T>,
    bias: &TensorOf<T>,
) -> Result<(TensorOf<T>, ConvCache<T>)> {
    let (h, w, c, d) = check_conv_args(input, layer, weights, bias)?;
    let out_h = output_side(h, layer.kernel_size, layer.stride, layer.padding)?;
    let out_w = output_side(w, layer.kernel_size, layer.stride, layer.padding)?;
    let positions = out_h * out_w;
    let cols = layer.kernel_size * layer.kernel_size * c;

    let patches = im2col(input, layer.kernel_size, layer.stride, layer.padding, out_h, out_w);

    let mut out = vec![T::zero(); positions * d];
    matmul_acc(&patches, weights.data(), &mut out, positions, cols, d);
    let b = bias.data();
    for row in out.chunks_exact_mut(d) {
        for (o, &bv) in row.iter_mut().zip(b.iter()) {
            *o = *o + bv;
        }
    }

    let out = TensorOf::new(vec![out_h, out_w, d], out)?;
    let cache = ConvCache {
        patches,
        in_h: h,
        in_w: w,
        in_c: c,
        out_h,
        out_w,
    };
    Ok((out, cache))
}

/// Convolution forward pass without keeping the backward cache.
pub fn conv2d_forward<T: Scalar>(
    input: &TensorOf<T>,
    layer: &LayerSpec,
    weights: &TensorOf<T>,
    bias: &TensorOf<T>,
) -> Result<TensorOf<T>> {
    conv2d_forward_cached(input, layer, weights, bias).map(|(out, _)| out)
}

/// Exact gradients of the conv forward map.
/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &TensorOf<T>,
    cache: &ConvCache<T>,
    layer: &LayerSpec,
    weights: &TensorOf<T>,
) -> Result<(TensorOf<T>, TensorOf<T>, TensorOf<T>)> {
    let k = layer.kernel_size;
    let (c, d) = (cache.in_c, layer.depth);
    if grad_out.shape() != [cache.out_h, cache.out_w, d] {
        return Err(Error::Contract(format!(
            "conv grad_out must be {:?}, got {:?}",
            [cache.out_h, cache.out_w, d],
            grad_out.shape()
        )));
    }
    let positions = cache.out_h * cache.out_w;
    let cols = k * k * c;
    let g = grad_out.data();

    // grad_bias: per-kernel sum over positions.
    let mut grad_bias = vec![T::zero(); d];
    for row in g.chunks_exact(d) {
        for (gb, &gv) in grad_bias.iter_mut().zip(row.iter()) {
            *gb = *gb + gv;
        }
    }

    // grad_w[K x D] = patches^T * grad_out, accumulated as rank-1 updates.
    let mut grad_w = vec![T::zero(); cols * d];
    for (patch, grow) in cache.patches.chunks_exact(cols).zip(g.chunks_exact(d)) {
        for (&a, gw_row) in patch.iter().zip(grad_w.chunks_exact_mut(d)) {
            if a != T::zero() {
                for (gw, &gv) in gw_row.iter_mut().zip(grow.iter()) {
                    *gw = *gw + a * gv;
                }
            }
        }
    }

    // grad_patches[P x K] = grad_out * w^T.
    let mut w_t = vec![T::zero(); d * cols];
    for (ki, w_row) in weights.data().chunks_exact(d).enumerate() {
        for (di, &wv) in w_row.iter().enumerate() {
            w_t[di * cols + ki] = wv;
        }
    }
    let mut grad_patches = vec![T::zero(); positions * cols];
    matmul_acc(g, &w_t, &mut grad_patches, positions, d, cols);

    // col2im: scatter-add each patch row back onto the input grid.
    let pad = layer.padding;
    let stride = layer.stride;
    let mut grad_input = TensorOf::zeros(&[cache.in_h, cache.in_w, cache.in_c]);
    let gi = grad_input.data_mut();
    let row_stride = cache.in_w * c;
    let run = k * c;
    for oy in 0..cache.out_h {
        for ox in 0..cache.out_w {
            let patch = &grad_patches[(oy * cache.out_w + ox) * cols..(oy * cache.out_w + ox + 1) * cols];
            for dy in 0..k {
                let py = oy * stride + dy;
                if py < pad || py >= cache.in_h + pad {
                    continue;
                }
                let iy = py - pad;
                let src = &patch[dy * run..(dy + 1) * run];
                for dx in 0..k {
                    let px = ox * stride + dx;
                    if px < pad || px >= cache.in_w + pad {
                        continue;
                    }
                    let ix = px - pad;
                    let dst = &mut gi[iy * row_stride + ix * c..iy * row_stride + (ix + 1) * c];
                    for (dv, &sv) in dst.iter_mut().zip(src[dx * c..(dx + 1) * c].iter()) {
                        *dv = *dv + sv;
                    }
                }
            }
        }
    }

    Ok((
        grad_input,
        TensorOf::new(vec![k, k, c, d], grad_w)?,
        TensorOf::new(vec![d], grad_bias)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use crate::tensor::Tensor;

    #[test]
    fn all_ones_three_by_three() {
        let input = Tensor::filled(&[3, 3, 1], 1.0);
        let layer = LayerSpec::conv(3, 1, 0, 1);
        let weights = Tensor::filled(&[3, 3, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &layer, &weights, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn shape_formula_matches_table() {
        let input = Tensor::zeros(&[300, 300, 3]);
        let layer = LayerSpec::conv(11, 4, 0, 96);
        let weights = Tensor::zeros(&[11, 11, 3, 96]);
        let bias = Tensor::zeros(&[96]);
        let out = conv2d_forward(&input, &layer, &weights, &bias).unwrap();
        assert_eq!(out.shape(), &[73, 73, 96]);
    }

    #[test]
    fn scalar_chain_rule() {
        // 1x1x1 input x=[2], 1x1 kernel w=[3], grad_out=[1]
        let input = Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap();
        let layer = LayerSpec::conv(1, 1, 0, 1);
        let weights = Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let (out, cache) = conv2d_forward_cached(&input, &layer, &weights, &bias).unwrap();
        assert_eq!(out.data(), &[6.0]);
        let grad_out = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let (gi, gw, gb) = conv2d_backward(&grad_out, &cache, &layer, &weights).unwrap();
        assert_eq!(gi.data(), &[3.0]);
        assert_eq!(gw.data(), &[2.0]);
        assert_eq!(gb.data(), &[1.0]);
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let input = Tensor::new(vec![4, 4, 2], (0..32).map(|i| i as f32 * 0.1).collect()).unwrap();
        let layer = LayerSpec::conv(3, 1, 1, 2);
        let weights = Tensor::filled(&[3, 3, 2, 2], 0.5);
        let bias = Tensor::zeros(&[2]);
        let (out, cache) = conv2d_forward_cached(&input, &layer, &weights, &bias).unwrap();
        let grad_out = Tensor::zeros(out.shape());
        let (gi, gw, gb) = conv2d_backward(&grad_out, &cache, &layer, &weights).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gw.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_behaves_like_zeros() {
        // A 1x1 input with a 3x3 kernel and pad 1: only the kernel center sees data.
        let input = Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap();
        let layer = LayerSpec::conv(3, 1, 1, 1);
        let mut wdata = vec![1.0f32; 9];
        wdata[4] = 10.0; // center tap (dy=1, dx=1)
        let weights = Tensor::new(vec![3, 3, 1, 1], wdata).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &layer, &weights, &bias).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[20.0]);
    }

    #[test]
    fn mismatched_weights_are_contract_errors() {
        let input = Tensor::zeros(&[4, 4, 2]);
        let layer = LayerSpec::conv(3, 1, 0, 2);
        let weights = Tensor::zeros(&[3, 3, 1, 2]); // wrong c_in
        let bias = Tensor::zeros(&[2]);
        assert!(matches!(
            conv2d_forward(&input, &layer, &weights, &bias),
            Err(crate::error::Error::Contract(_))
        ));
    }
}

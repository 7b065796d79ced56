//! Inverted dropout: in train mode each element is zeroed with probability
//! `rate` and survivors are scaled by 1/(1-rate), so eval mode is the identity.

use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::tensor::{Scalar, TensorOf};
use rand::Rng;

/// Per-element scale factors (0 or 1/(1-rate)), reused by the backward pass.
/// Eval mode keeps no mask.
#[derive(Debug, Clone)]
pub struct DropoutCache<T> {
    mask: Option<Vec<T>>,
}

pub fn dropout<T: Scalar, R: Rng>(
    input: &TensorOf<T>,
    rate: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<(TensorOf<T>, DropoutCache<T>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Contract(format!("dropout rate must be in [0,1], got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), DropoutCache { mask: None }));
    }
    if rate >= 1.0 {
        log::warn!("dropout rate 1.0 zeroes the whole tensor");
        let zeros = TensorOf::zeros(input.shape());
        let mask = vec![T::zero(); input.len()];
        return Ok((zeros, DropoutCache { mask: Some(mask) }));
    }
    let keep_scale = T::from_f64_lossy(1.0 / (1.0 - rate as f64));
    let rate = rate as f64;
    let mask: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(mask.iter())
        .map(|(&x, &m)| x * m)
        .collect();
    Ok((
        TensorOf::new(input.shape().to_vec(), data)?,
        DropoutCache { mask: Some(mask) },
    ))
}

pub fn dropout_backward<T: Scalar>(
    grad_out: &TensorOf<T>,
    cache: &DropoutCache<T>,
) -> Result<TensorOf<T>> {
    match &cache.mask {
        None => Ok(grad_out.clone()),
        Some(mask) => {
            if mask.len() != grad_out.len() {
                return Err(Error::Contract(format!(
                    "dropout backward mask has {} elements, grad_out {}",
                    mask.len(),
                    grad_out.len()
                )));
            }
            let data = grad_out
                .data()
                .iter()
                .zip(mask.iter())
                .map(|(&g, &m)| g * m)
                .collect();
            TensorOf::new(grad_out.shape().to_vec(), data)
        }
    }
}

//! Adaptive moment estimation with bias correction. One state owns the first
//! and second moment tensors for the whole flat parameter list.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, TensorOf};

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    /// Step counter; incremented before each update.
    pub t: u64,
    m: Vec<TensorOf<T>>,
    v: Vec<TensorOf<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with the conventional decay rates (0.9, 0.999, eps 1e-8).
    pub fn new(lr: T) -> Self {
        AdamState {
            lr,
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            epsilon: T::from_f64_lossy(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn moments(&self) -> (&[TensorOf<T>], &[TensorOf<T>]) {
        (&self.m, &self.v)
    }
}

/// One Adam update over the flat parameter list:
/// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`, then
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
/// Moment tensors are allocated lazily on the first step.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut TensorOf<T>],
    grads: &[TensorOf<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Contract(format!(
            "adam: {} parameter tensors but {} gradient tensors",
            params.len(),
            grads.len()
        )));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| TensorOf::zeros(p.shape())).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Contract(
            "adam state was initialized for a different parameter list".into(),
        ));
    }

    state.t += 1;
    let one = T::one();
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = one - b1.powi(state.t as i32);
    let bc2 = one - b2.powi(state.t as i32);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Contract(format!(
                "adam shape mismatch: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
        for ((pv, &gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data().iter())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv = *pv - state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tensor, TensorOf};

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::new(0.001f32);
        let before = p.clone();
        {
            let mut refs = [&mut p];
            adam_step(&mut refs, std::slice::from_ref(&g), &mut state).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // At t=1 the bias correction makes m_hat/sqrt(v_hat) = sign(g),
        // so |delta| ~= lr for any nonzero gradient.
        for &g0 in &[0.001f32, 1.0, 250.0, -3.5] {
            let mut p = Tensor::from_vec(vec![1.0]);
            let g = Tensor::from_vec(vec![g0]);
            let mut state = AdamState::new(0.01f32);
            {
                let mut refs = [&mut p];
                adam_step(&mut refs, std::slice::from_ref(&g), &mut state).unwrap();
            }
            let delta = p.data()[0] - 1.0;
            assert!(
                (delta.abs() - 0.01).abs() < 1e-4,
                "g = {g0}, delta = {delta}"
            );
            assert_eq!(delta < 0.0, g0 > 0.0);
        }
    }

    #[test]
    fn matches_hand_rolled_scalar_reference() {
        // Two steps on a scalar with g = 1.0 both times, lr = 0.001, in f64.
        let mut p = TensorOf::<f64>::from_vec(vec![0.5]);
        let g = TensorOf::<f64>::from_vec(vec![1.0]);
        let mut state = AdamState::new(0.001f64);
        for _ in 0..2 {
            let mut refs = [&mut p];
            adam_step(&mut refs, std::slice::from_ref(&g), &mut state).unwrap();
        }

        // independent reference, written out step by step
        let (lr, b1, b2, eps) = (0.001f64, 0.9f64, 0.999f64, 1e-8f64);
        let mut w = 0.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2u32 {
            m = b1 * m + (1.0 - b1) * 1.0;
            v = b2 * v + (1.0 - b2) * 1.0;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        assert!((p.data()[0] - w).abs() < 1e-9, "{} vs {}", p.data()[0], w);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::new(0.001f32);
        let mut refs = [&mut p];
        assert!(adam_step(&mut refs, std::slice::from_ref(&g), &mut state).is_err());
    }
}

//! Rank-N float tensors with shape metadata.
//!
//! Data is a flat row-major array; images are stored channel-last (H, W, C).
//! Training runs on `f32` ([`Tensor`]); the element type is generic so that
//! gradient-check oracles can run the exact same code paths in `f64`.

use crate::error::{Error, Result};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt;

/// Element types tensors can carry. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used when sampling noise in double precision.
    fn from_f64_lossy(v: f64) -> Self;
}

impl Scalar for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}

/// Rank-N tensor over any [`Scalar`]. See [`Tensor`] for the training-time alias.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorOf<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// The 32-bit tensor used everywhere outside test oracles.
pub type Tensor = TensorOf<f32>;

impl<T: Scalar> TensorOf<T> {
    /// Build a tensor, checking that the shape product matches the data length.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Contract(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        if expected != data.len() {
            return Err(Error::Contract(format!(
                "tensor shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(TensorOf { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        TensorOf {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n: usize = shape.iter().product();
        TensorOf {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        TensorOf {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterpret the flat data under a new shape of equal element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Contract(format!(
                "cannot reshape {} elements into {shape:?}",
                self.data.len()
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Flat index for (h, w, c) in a rank-3 channel-last tensor.
    #[inline]
    pub fn idx3(&self, h: usize, w: usize, c: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        (h * self.shape[1] + w) * self.shape[2] + c
    }

    #[inline]
    pub fn at3(&self, h: usize, w: usize, c: usize) -> T {
        self.data[self.idx3(h, w, c)]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        TensorOf {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Contract(format!(
                "shape mismatch in add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.data.iter_mut() {
            *v = *v * factor;
        }
    }

    /// Convert elementwise to another scalar type via `f64`.
    pub fn cast<U: Scalar>(&self) -> TensorOf<U> {
        TensorOf {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap()))
                .collect(),
        }
    }
}

/// `c[m][n] += a[m][k] * b[k][n]`, all row-major. The workhorse behind conv
/// (via im2col) and dense layers; the k-in-the-middle loop order keeps the
/// inner loop contiguous so it autovectorizes.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (a_row, c_row) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&a_ik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (c_j, &b_j) in c_row.iter_mut().zip(b_row.iter()) {
                *c_j = *c_j + a_ik * b_j;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_shape_product() {
        assert!(TensorOf::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(TensorOf::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(TensorOf::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn idx3_is_row_major_channel_last() {
        let t = Tensor::new(vec![2, 3, 4], (0..24).map(|i| i as f32).collect()).unwrap();
        assert_eq!(t.at3(0, 0, 0), 0.0);
        assert_eq!(t.at3(0, 0, 3), 3.0);
        assert_eq!(t.at3(0, 1, 0), 4.0);
        assert_eq!(t.at3(1, 0, 0), 12.0);
        assert_eq!(t.at3(1, 2, 3), 23.0);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.clone().reshape(vec![6]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(vec![4]).is_err());
    }

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f32, 2., 3., 4.];
        let b = [5.0f32, 6., 7., 8.];
        let mut c = [0.0f32; 4];
        matmul_acc(&a, &b, &mut c, 2, 2, 2);
        assert_eq!(c, [19., 22., 43., 50.]);
    }

    #[test]
    fn finite_check() {
        let mut t = Tensor::zeros(&[3]);
        assert!(t.all_finite());
        t.data_mut()[1] = f32::NAN;
        assert!(!t.all_finite());
    }
}

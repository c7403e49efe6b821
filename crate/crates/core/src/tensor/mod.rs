//! Dense tensors and the forward/backward operator set used by the network.
//!
//! Activations are laid out `[batch, channels, frequency, time]`, row-major,
//! time innermost. Kernels are `[out_ch, in_ch / groups, kf, kt]`. There is no
//! autodiff graph: every differentiable op exposes a forward and a matching
//! backward, and the model composes them in reverse order.

mod conv;
mod norm;
mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use conv::{conv2d_backward, conv2d_forward, conv_out_len, ConvGrads, ConvSpec};
pub use norm::{
    batchnorm_backward, batchnorm_forward, subspectral_norm_backward, subspectral_norm_forward,
    NormCache, NormMode, BN_EPS, BN_MOMENTUM,
};
pub use ops::{
    channel_dropout_backward, channel_dropout_forward, dropout_mask, freq_avgpool_backward,
    freq_avgpool_forward, freq_broadcast_add, freq_broadcast_add_backward, relu_backward,
    relu_forward, sigmoid, swish_backward, swish_forward, time_trim_backward, time_trim_forward,
};

/// Floating point element type. Implemented for `f32` (the working precision)
/// and `f64` (used as a shadow path in gradient checks).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }
    fn to_f64c(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} need {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    /// Extents of a 4-D activation tensor as `(n, c, f, t)`.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.dims.len(), 4, "expected a 4-D tensor, got {:?}", self.dims);
        (self.dims[0], self.dims[1], self.dims[2], self.dims[3])
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64c(v.to_f64c())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64c() - b.to_f64c()).abs())
            .fold(0.0, f64::max)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "shape mismatch {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Copies time range `[t0, t0 + len)` of a 4-D tensor.
    pub fn time_slice(&self, t0: usize, len: usize) -> Self {
        let (n, c, f, t) = self.dims4();
        assert!(t0 + len <= t);
        let mut out = Vec::with_capacity(n * c * f * len);
        for row in self.data.chunks(t) {
            out.extend_from_slice(&row[t0..t0 + len]);
        }
        Tensor {
            dims: vec![n, c, f, len],
            data: out,
        }
    }
}

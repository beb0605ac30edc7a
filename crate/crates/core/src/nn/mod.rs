//! Differentiable layers. Each op records itself on a [`Tape`](crate::autodiff::Tape)
//! and owns its backward rule.

pub mod activation;
pub mod conv;
pub mod loss;
pub mod pool;
pub mod shape;
pub mod similarity;

pub use activation::sigmoid_scalar;
pub use loss::{bce_value, BCE_EPS};

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output keeps `ceil(H / stride)`; odd padding goes to the bottom/right.
    Same,
    Valid,
}

/// Weights (`kh x kw x in_ch x out_ch`) and bias (`out_ch`) of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(k: usize, in_ch: usize, out_ch: usize) -> Result<Self> {
        if !(1..=3).contains(&k) {
            return Err(Error::UnsupportedKernel { kh: k, kw: k });
        }
        if out_ch == 0 {
            return Err(Error::invalid("out_ch must be >= 1"));
        }
        Ok(ConvParams {
            weight: Tensor::zeros(vec![k, k, in_ch, out_ch]).with_grad(),
            bias: Tensor::zeros(vec![out_ch]).with_grad(),
            stride: 1,
            padding: Padding::Same,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_ch(&self) -> usize {
        self.weight.shape()[3]
    }
}

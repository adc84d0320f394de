//! Convolution layers and parameter-name nesting.

use fat_tensor::{Module, Tensor};
use rand::Rng;

use crate::error::Result;

/// Visits `m`'s parameters with names prefixed by `prefix.`.
pub(crate) fn visit_nested<M: Module + ?Sized>(m: &M, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
    m.visit(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

pub(crate) fn visit_mut_nested<M: Module + ?Sized>(m: &mut M, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
    m.visit_mut(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

/// Convolution weights `C_out×C_in×k×k` and bias `C_out`.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: Tensor,
    pub b: Tensor,
}

impl Conv {
    /// Normal weights with std `1/√fan_in`, zero bias.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize, k: usize) -> Self {
        let std = 1.0 / ((c_in * k * k) as f64).sqrt();
        Conv {
            w: Tensor::randn(&[c_out, c_in, k, k], std, rng).requires_grad(),
            b: Tensor::zeros(&[c_out]).requires_grad(),
        }
    }

    pub fn forward(&self, x: &Tensor, stride: usize) -> Result<Tensor> {
        Ok(x.conv2d(&self.w, &self.b, stride)?)
    }

    pub(crate) fn visit_as(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.w"), &self.w);
        f(&format!("{prefix}.b"), &self.b);
    }

    pub(crate) fn visit_mut_as(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.w"), &mut self.w);
        f(&format!("{prefix}.b"), &mut self.b);
    }
}

/// Transposed convolution weights `C_in×C_out×k×k` and bias `C_out`.
#[derive(Clone, Debug)]
pub struct Deconv {
    pub w: Tensor,
    pub b: Tensor,
}

impl Deconv {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize, k: usize) -> Self {
        let std = 1.0 / ((c_in * k * k) as f64 / 4.0).sqrt();
        Deconv {
            w: Tensor::randn(&[c_in, c_out, k, k], std, rng).requires_grad(),
            b: Tensor::zeros(&[c_out]).requires_grad(),
        }
    }

    pub fn forward(&self, x: &Tensor, stride: usize) -> Result<Tensor> {
        Ok(x.deconv2d(&self.w, &self.b, stride)?)
    }

    pub(crate) fn visit_as(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.w"), &self.w);
        f(&format!("{prefix}.b"), &self.b);
    }

    pub(crate) fn visit_mut_as(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.w"), &mut self.w);
        f(&format!("{prefix}.b"), &mut self.b);
    }
}

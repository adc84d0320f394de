//! Dense `f64` tensors with a recorded computation graph and reverse-mode
//! differentiation: the arithmetic, convolution, normalization, attention and
//! sampling operators a small image-to-image GAN needs, plus Adam and the
//! `FATW` checkpoint format.
//!
//! ```
//! use fat_tensor::Tensor;
//!
//! let x = Tensor::param(&[1], vec![3.0]).unwrap();
//! let loss = x.mul(&x).unwrap().sum();
//! loss.backward().unwrap();
//! assert_eq!(x.grad().unwrap(), vec![6.0]);
//! ```

mod autograd;
pub mod checkpoint;
mod error;
mod gemm;
pub mod gradcheck;
pub mod ops;
mod optim;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::sample::{denormalize, identity_grid, normalize};
pub use ops::{pointwise, Pointwise, DEFAULT_EPS};
pub use optim::{AdamConfig, AdamState, Module};
pub use tensor::Tensor;

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
pub mod sample;
mod shape;
mod softmax;

pub use norm::DEFAULT_EPS;

use crate::error::{param_err, Result};
use crate::tensor::Tensor;

/// Elementwise and loss kinds reachable through [`pointwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Add,
    Mul,
    /// Multiply by the single value of the second operand (a constant).
    Scale,
    /// Concatenate along axis 0.
    Concat,
    Relu,
    Tanh,
    /// Mean absolute difference.
    L1,
    /// Mean squared difference.
    Mse,
}

/// Applies `kind` to `operands`, checking the operand count.
pub fn pointwise(kind: Pointwise, operands: &[&Tensor]) -> Result<Tensor> {
    let arity = |n: usize| -> Result<()> {
        if operands.len() != n {
            return Err(param_err(
                "pointwise",
                format!("{kind:?} takes {n} operands, got {}", operands.len()),
            ));
        }
        Ok(())
    };
    match kind {
        Pointwise::Add => {
            arity(2)?;
            operands[0].add(operands[1])
        }
        Pointwise::Mul => {
            arity(2)?;
            operands[0].mul(operands[1])
        }
        Pointwise::Scale => {
            arity(2)?;
            Ok(operands[0].scale(operands[1].item()))
        }
        Pointwise::Concat => Tensor::concat(operands, 0),
        Pointwise::Relu => {
            arity(1)?;
            Ok(operands[0].relu())
        }
        Pointwise::Tanh => {
            arity(1)?;
            Ok(operands[0].tanh())
        }
        Pointwise::L1 => {
            arity(2)?;
            operands[0].l1_loss(operands[1])
        }
        Pointwise::Mse => {
            arity(2)?;
            operands[0].mse_loss(operands[1])
        }
    }
}

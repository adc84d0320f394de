use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn unary(
    x: &Tensor,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    // derivative given (input, output)
    df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let xs = x.clone();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        op,
        vec![x.clone()],
        Box::new(move |g, out, _| {
            let gx = g
                .iter()
                .zip(xs.data())
                .zip(out)
                .map(|((g, &xi), &yi)| g * df(xi, yi))
                .collect();
            vec![Some(gx)]
        }),
    )
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "add",
            vec![self.clone(), other.clone()],
            Box::new(|g, _, needs| vec![needs[0].then(|| g.to_vec()), needs[1].then(|| g.to_vec())]),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "sub",
            vec![self.clone(), other.clone()],
            Box::new(|g, _, needs| {
                vec![
                    needs[0].then(|| g.to_vec()),
                    needs[1].then(|| g.iter().map(|v| -v).collect()),
                ]
            }),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            "mul",
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, needs| {
                vec![
                    needs[0].then(|| g.iter().zip(b.data()).map(|(g, v)| g * v).collect()),
                    needs[1].then(|| g.iter().zip(a.data()).map(|(g, v)| g * v).collect()),
                ]
            }),
        ))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        unary(self, "scale", |v| v * s, move |_, _| s)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, "add_scalar", |v| v + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    /// max(x, 0); the derivative at 0 is taken as 0.
    pub fn relu(&self) -> Tensor {
        unary(self, "relu", |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&self) -> Tensor {
        unary(self, "tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Tensor {
        unary(self, "sigmoid", stable_sigmoid, |_, y| y * (1.0 - y))
    }
}

pub(crate) fn stable_sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(v)) without overflow.
pub(crate) fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

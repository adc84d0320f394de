use crate::error::{dim_err, Result};
use crate::ops::elementwise::{softplus, stable_sigmoid};
use crate::tensor::Tensor;

impl Tensor {
    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let s = self.data().iter().sum();
        Tensor::from_op(
            vec![],
            vec![s],
            "sum",
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Mean absolute difference. The subgradient of |0| is 0.
    pub fn l1_loss(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(dim_err("l1", self.shape(), target.shape()));
        }
        let n = self.numel().max(1) as f64;
        let diff: Vec<f64> = self.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
        let v = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
        Ok(Tensor::from_op(
            vec![],
            vec![v],
            "l1",
            vec![self.clone(), target.clone()],
            Box::new(move |g, _, needs| {
                let sign: Vec<f64> = diff
                    .iter()
                    .map(|&d| {
                        if d > 0.0 {
                            g[0] / n
                        } else if d < 0.0 {
                            -g[0] / n
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![
                    needs[0].then(|| sign.clone()),
                    needs[1].then(|| sign.iter().map(|v| -v).collect()),
                ]
            }),
        ))
    }

    /// Mean squared difference.
    pub fn mse_loss(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(dim_err("mse", self.shape(), target.shape()));
        }
        let n = self.numel().max(1) as f64;
        let diff: Vec<f64> = self.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
        let v = diff.iter().map(|d| d * d).sum::<f64>() / n;
        Ok(Tensor::from_op(
            vec![],
            vec![v],
            "mse",
            vec![self.clone(), target.clone()],
            Box::new(move |g, _, needs| {
                let gd: Vec<f64> = diff.iter().map(|d| 2.0 * d * g[0] / n).collect();
                vec![
                    needs[0].then(|| gd.clone()),
                    needs[1].then(|| gd.iter().map(|v| -v).collect()),
                ]
            }),
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(self)` against a constant label.
    pub fn bce_with_logits(&self, label: f64) -> Tensor {
        let n = self.numel().max(1) as f64;
        // -[y log σ(l) + (1-y) log(1-σ(l))] = y·softplus(-l) + (1-y)·softplus(l)
        let v = self
            .data()
            .iter()
            .map(|&l| label * softplus(-l) + (1.0 - label) * softplus(l))
            .sum::<f64>()
            / n;
        let x = self.clone();
        Tensor::from_op(
            vec![],
            vec![v],
            "bce_with_logits",
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let gx = x
                    .data()
                    .iter()
                    .map(|&l| (stable_sigmoid(l) - label) * g[0] / n)
                    .collect();
                vec![Some(gx)]
            }),
        )
    }
}

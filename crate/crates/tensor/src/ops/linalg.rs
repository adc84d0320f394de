use crate::error::{dim_err, Result};
use crate::gemm::{gemm, matmul_new, Mat};
use crate::tensor::Tensor;

impl Tensor {
    /// `[M×K] · [K×N] → [M×N]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(dim_err("matmul", self.shape(), other.shape()));
        }
        let (m, k, n) = (self.shape()[0], self.shape()[1], other.shape()[1]);
        let data = matmul_new(Mat::new(self.data(), m, k), Mat::new(other.data(), k, n));
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            "matmul",
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, needs| {
                let gm = Mat::new(g, m, n);
                vec![
                    needs[0].then(|| matmul_new(gm, Mat::new(b.data(), k, n).t())),
                    needs[1].then(|| matmul_new(Mat::new(a.data(), m, k).t(), gm)),
                ]
            }),
        ))
    }

    /// Batched product `[B×M×K] · [B×K×N] → [B×M×N]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let ok = self.rank() == 3
            && other.rank() == 3
            && self.shape()[0] == other.shape()[0]
            && self.shape()[2] == other.shape()[1];
        if !ok {
            return Err(dim_err("bmm", self.shape(), other.shape()));
        }
        let (bs, m, k, n) = (self.shape()[0], self.shape()[1], self.shape()[2], other.shape()[2]);
        let mut data = vec![0.0; bs * m * n];
        for (i, out) in data.chunks_mut(m * n).enumerate() {
            gemm(
                Mat::new(&self.data()[i * m * k..(i + 1) * m * k], m, k),
                Mat::new(&other.data()[i * k * n..(i + 1) * k * n], k, n),
                out,
                0.0,
            );
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![bs, m, n],
            data,
            "bmm",
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, needs| {
                let ga = needs[0].then(|| {
                    let mut ga = vec![0.0; bs * m * k];
                    for (i, out) in ga.chunks_mut(m * k).enumerate() {
                        gemm(
                            Mat::new(&g[i * m * n..(i + 1) * m * n], m, n),
                            Mat::new(&b.data()[i * k * n..(i + 1) * k * n], k, n).t(),
                            out,
                            0.0,
                        );
                    }
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![0.0; bs * k * n];
                    for (i, out) in gb.chunks_mut(k * n).enumerate() {
                        gemm(
                            Mat::new(&a.data()[i * m * k..(i + 1) * m * k], m, k).t(),
                            Mat::new(&g[i * m * n..(i + 1) * m * n], m, n),
                            out,
                            0.0,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }
}

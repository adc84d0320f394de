use crate::error::{param_err, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

impl Tensor {
    /// Per-channel normalization of a `C×H×W` tensor to zero mean and unit
    /// (biased) variance over `H×W`, with `eps` added to the variance.
    pub fn instance_norm(&self, eps: f64) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(param_err(
                "instance_norm",
                format!("needs C×H×W, got {:?}", self.shape()),
            ));
        }
        if eps <= 0.0 {
            return Err(param_err("instance_norm", "eps must be positive"));
        }
        let plane = self.shape()[1] * self.shape()[2];
        let n = plane as f64;
        let mut out = vec![0.0; self.numel()];
        let mut inv_std = Vec::with_capacity(self.shape()[0]);
        for (xc, yc) in self.data().chunks(plane).zip(out.chunks_mut(plane)) {
            let mean = xc.iter().sum::<f64>() / n;
            let var = xc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for (y, x) in yc.iter_mut().zip(xc) {
                *y = (x - mean) * is;
            }
            inv_std.push(is);
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            "instance_norm",
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = vec![0.0; g.len()];
                for (c, is) in inv_std.iter().enumerate() {
                    let r = c * plane..(c + 1) * plane;
                    let (gc, yc) = (&g[r.clone()], &y[r.clone()]);
                    let gsum: f64 = gc.iter().sum();
                    let gysum: f64 = gc.iter().zip(yc).map(|(a, b)| a * b).sum();
                    for ((d, gi), yi) in gx[r].iter_mut().zip(gc).zip(yc) {
                        *d = is * (gi - gsum / n - yi * gysum / n);
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

use crate::error::{param_err, Result};
use crate::tensor::Tensor;

/// Visits every 1-D slice along `axis` as a list of flat offsets.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(&[usize])) {
    let outer: usize = shape[..axis].iter().product();
    let ext = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut lane = vec![0usize; ext];
    for o in 0..outer {
        for i in 0..inner {
            for (a, slot) in lane.iter_mut().enumerate() {
                *slot = (o * ext + a) * inner + i;
            }
            f(&lane);
        }
    }
}

impl Tensor {
    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(param_err("softmax", format!("axis {axis} out of {:?}", self.shape())));
        }
        let shape = self.shape().to_vec();
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for_each_lane(&shape, axis, |lane| {
            let mx = lane.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for &i in lane {
                let e = (x[i] - mx).exp();
                out[i] = e;
                s += e;
            }
            for &i in lane {
                out[i] /= s;
            }
        });
        let bshape = shape.clone();
        Ok(Tensor::from_op(
            shape,
            out,
            "softmax",
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = vec![0.0; y.len()];
                for_each_lane(&bshape, axis, |lane| {
                    let dot: f64 = lane.iter().map(|&i| g[i] * y[i]).sum();
                    for &i in lane {
                        gx[i] = y[i] * (g[i] - dot);
                    }
                });
                vec![Some(gx)]
            }),
        ))
    }
}

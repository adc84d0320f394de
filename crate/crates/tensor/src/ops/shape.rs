use crate::error::{dim_err, param_err, Result};
use crate::tensor::{numel, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gather through an index map: `out[i] = x[src[i]]`; backward scatters.
fn gather(x: &Tensor, shape: Vec<usize>, src: Vec<usize>, op: &'static str) -> Tensor {
    let data = src.iter().map(|&i| x.data()[i]).collect();
    let n_in = x.numel();
    Tensor::from_op(
        shape,
        data,
        op,
        vec![x.clone()],
        Box::new(move |g, _, _| {
            let mut gx = vec![0.0; n_in];
            for (gi, &s) in g.iter().zip(&src) {
                gx[s] += gi;
            }
            vec![Some(gx)]
        }),
    )
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(dim_err("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            "reshape",
            vec![self.clone()],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(param_err(
                "permute",
                format!("{perm:?} is not a permutation of rank {rank}"),
            ));
        }
        let in_strides = strides(self.shape());
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape()[p]).collect();
        let n = self.numel();
        let mut src = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        for _ in 0..n {
            src.push(idx.iter().zip(perm).map(|(&i, &p)| i * in_strides[p]).sum());
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(gather(self, out_shape, src, "permute"))
    }

    /// Matrix transpose of a rank-2 tensor.
    pub fn t(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(param_err("transpose", format!("needs rank 2, got {:?}", self.shape())));
        }
        self.permute(&[1, 0])
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(param_err(
                "narrow",
                format!("axis {axis} range {start}..{} out of {:?}", start + len, self.shape()),
            ));
        }
        let shape = self.shape();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let ext = shape[axis];
        let mut src = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            for a in start..start + len {
                let base = (o * ext + a) * inner;
                src.extend(base..base + inner);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        Ok(gather(self, out_shape, src, "narrow"))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| param_err("concat", "no operands"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(param_err("concat", format!("axis {axis} out of rank {rank}")));
        }
        for p in &parts[1..] {
            let compatible = p.rank() == rank
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(dim_err("concat", first.shape(), p.shape()));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let exts: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = exts.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&exts) {
                data.extend_from_slice(&p.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        Ok(Tensor::from_op(
            shape,
            data,
            "concat",
            parts.iter().map(|&p| p.clone()).collect(),
            Box::new(move |g, _, needs| {
                let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (gp, &e) in grads.iter_mut().zip(&exts) {
                        gp.extend_from_slice(&g[off..off + e * inner]);
                        off += e * inner;
                    }
                }
                grads.into_iter().zip(needs).map(|(gp, &n)| n.then_some(gp)).collect()
            }),
        ))
    }
}

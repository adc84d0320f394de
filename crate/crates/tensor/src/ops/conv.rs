//! Same-padded 2-D convolution, its transpose, and average pooling on
//! `C×H×W` tensors. Convolutions lower to im2col + GEMM.

use crate::error::{dim_err, param_err, Result};
use crate::gemm::{gemm, matmul_new, Mat};
use crate::tensor::Tensor;

/// Geometry of a convolution from an `h×w` input to an `oh×ow` output.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn new(c: usize, h: usize, w: usize, k: usize, stride: usize) -> Self {
        let pad = (k - 1) / 2;
        Geom {
            c,
            h,
            w,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        }
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Input pixel under output (oy, ox) at kernel tap (ky, kx), if inside.
    #[inline]
    fn src(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<usize> {
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        let x = (ox * self.stride + kx) as isize - self.pad as isize;
        (y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w).then(|| y as usize * self.w + x as usize)
    }
}

fn im2col(x: &[f64], g: &Geom) -> Vec<f64> {
    let (hw, ncols) = (g.h * g.w, g.cols());
    let mut cols = vec![0.0; g.rows() * ncols];
    for ci in 0..g.c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some(s) = g.src(oy, ox, ky, kx) {
                            dst[oy * g.ow + ox] = plane[s];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &Geom) -> Vec<f64> {
    let (hw, ncols) = (g.h * g.w, g.cols());
    let mut x = vec![0.0; g.c * hw];
    for ci in 0..g.c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some(s) = g.src(oy, ox, ky, kx) {
                            plane[s] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

fn add_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad(g: &[f64], plane: usize) -> Vec<f64> {
    g.chunks(plane).map(|c| c.iter().sum()).collect()
}

fn check_kernel(op: &'static str, x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<()> {
    if stride < 1 {
        return Err(param_err(op, "stride must be at least 1"));
    }
    if x.rank() != 3 || w.rank() != 4 {
        return Err(dim_err(op, x.shape(), w.shape()));
    }
    let k = w.shape()[2];
    if k % 2 == 0 || w.shape()[3] != k {
        return Err(param_err(
            op,
            format!("kernel must be square and odd, got {:?}", w.shape()),
        ));
    }
    if b.rank() != 1 {
        return Err(dim_err(op, w.shape(), b.shape()));
    }
    Ok(())
}

impl Tensor {
    /// Cross-correlation of `x: C_in×H×W` with `w: C_out×C_in×k×k`, padding
    /// `(k-1)/2`, giving `C_out×⌈H/s⌉×⌈W/s⌉`.
    pub fn conv2d(&self, w: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
        check_kernel("conv2d", self, w, b, stride)?;
        let (cin, h, wd) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        if w.shape()[1] != cin || b.shape()[0] != cout {
            return Err(dim_err("conv2d", self.shape(), w.shape()));
        }
        let pad = (k - 1) / 2;
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(param_err(
                "conv2d",
                format!("padded input {h}×{wd} smaller than kernel {k}"),
            ));
        }
        let g = Geom::new(cin, h, wd, k, stride);
        let cols = im2col(self.data(), &g);
        let mut out = matmul_new(Mat::new(w.data(), cout, g.rows()), Mat::new(&cols, g.rows(), g.cols()));
        add_bias(&mut out, b.data(), g.cols());

        let wt = w.clone();
        Ok(Tensor::from_op(
            vec![cout, g.oh, g.ow],
            out,
            "conv2d",
            vec![self.clone(), w.clone(), b.clone()],
            Box::new(move |go, _, needs| {
                let gm = Mat::new(go, cout, g.cols());
                let gx = needs[0].then(|| {
                    let gcols = matmul_new(Mat::new(wt.data(), cout, g.rows()).t(), gm);
                    col2im(&gcols, &g)
                });
                let gw = needs[1].then(|| matmul_new(gm, Mat::new(&cols, g.rows(), g.cols()).t()));
                let gb = needs[2].then(|| bias_grad(go, g.cols()));
                vec![gx, gw, gb]
            }),
        ))
    }

    /// Transposed convolution, the adjoint of [`Tensor::conv2d`] with the
    /// same kernel: `x: C_in×H×W`, `w: C_in×C_out×k×k` → `C_out×sH×sW`.
    pub fn deconv2d(&self, w: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
        check_kernel("deconv2d", self, w, b, stride)?;
        if stride > 2 {
            return Err(param_err("deconv2d", format!("stride must be 1 or 2, got {stride}")));
        }
        let (cin, h, wd) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, k) = (w.shape()[1], w.shape()[2]);
        if w.shape()[0] != cin || b.shape()[0] != cout {
            return Err(dim_err("deconv2d", self.shape(), w.shape()));
        }
        // geometry of the forward conv this op is the adjoint of
        let g = Geom::new(cout, h * stride, wd * stride, k, stride);
        debug_assert_eq!((g.oh, g.ow), (h, wd));
        let plane = g.h * g.w;
        let cols = matmul_new(
            Mat::new(w.data(), cin, g.rows()).t(),
            Mat::new(self.data(), cin, h * wd),
        );
        let mut out = col2im(&cols, &g);
        add_bias(&mut out, b.data(), plane);

        let (xs, wt) = (self.clone(), w.clone());
        Ok(Tensor::from_op(
            vec![cout, g.h, g.w],
            out,
            "deconv2d",
            vec![self.clone(), w.clone(), b.clone()],
            Box::new(move |go, _, needs| {
                let gcols = im2col(go, &g);
                let gc = Mat::new(&gcols, g.rows(), g.cols());
                let gx = needs[0].then(|| matmul_new(Mat::new(wt.data(), cin, g.rows()), gc));
                let gw = needs[1].then(|| {
                    let mut gw = vec![0.0; cin * g.rows()];
                    gemm(Mat::new(xs.data(), cin, h * wd), gc.t(), &mut gw, 0.0);
                    gw
                });
                let gb = needs[2].then(|| bias_grad(go, plane));
                vec![gx, gw, gb]
            }),
        ))
    }

    /// Non-overlapping `f×f` average pooling of a `C×H×W` tensor.
    pub fn avg_pool2d(&self, f: usize) -> Result<Tensor> {
        if self.rank() != 3 || f == 0 || self.shape()[1] % f != 0 || self.shape()[2] % f != 0 {
            return Err(param_err(
                "avg_pool2d",
                format!("cannot pool {:?} by {f}", self.shape()),
            ));
        }
        let (c, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (oh, ow) = (h / f, w / f);
        let inv = 1.0 / (f * f) as f64;
        let x = self.data();
        let mut out = vec![0.0; c * oh * ow];
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    out[(ci * oh + y / f) * ow + xx / f] += x[(ci * h + y) * w + xx] * inv;
                }
            }
        }
        Ok(Tensor::from_op(
            vec![c, oh, ow],
            out,
            "avg_pool2d",
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![0.0; c * h * w];
                for ci in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            gx[(ci * h + y) * w + xx] = g[(ci * oh + y / f) * ow + xx / f] * inv;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

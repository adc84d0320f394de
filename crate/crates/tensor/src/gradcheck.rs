//! Central finite-difference verification of reverse-mode gradients.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Gradients smaller than this are compared absolutely.
    pub floor: f64,
    /// Upper bound on probed entries per input (evenly strided).
    pub max_probes: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            floor: 1e-3,
            max_probes: usize::MAX,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, entry, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub probes: usize,
}

/// Compares the backward gradient of the scalar `f(inputs)` with central
/// differences on each probed input entry.
pub fn check<F>(inputs: &[Tensor], cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs.iter().map(|t| t.detach().requires_grad()).collect();
    let out = f(&leaves)?;
    if out.numel() != 1 {
        return Err(TensorError::Contract(format!(
            "gradient check needs a scalar function, got {:?}",
            out.shape()
        )));
    }
    out.backward()?;

    let mut report = GradCheckReport::default();
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let n = leaf.numel();
        let stride = n.div_ceil(cfg.max_probes.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let eval = |delta: f64| -> Result<f64> {
                let probe: Vec<Tensor> = inputs
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        if k == i {
                            let mut d = t.to_vec();
                            d[j] += delta;
                            Tensor::new(t.shape(), d).expect("same shape")
                        } else {
                            t.detach()
                        }
                    })
                    .collect();
                Ok(f(&probe)?.item())
            };
            let numeric = (eval(cfg.step)? - eval(-cfg.step)?) / (2.0 * cfg.step);
            let a = analytic[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.probes += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                if err >= report.max_rel_err {
                    report.worst = Some((i, j, a, numeric));
                }
            }
        }
    }
    Ok(report)
}

use crate::error::{param_err, Result};
use crate::tensor::Tensor;

/// Anything owning named trainable tensors.
///
/// Visit order must be stable: optimizers and checkpoints key on it.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn zero_grad(&self) {
        self.visit(&mut |_, t| t.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.numel());
        n
    }

    fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers and step counter of a bias-corrected Adam optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of raw parameter buffers in place.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(param_err("adam", format!("learning rate must be positive, got {lr}")));
        }
        if params.len() != grads.len() {
            return Err(param_err(
                "adam",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(param_err(
                "adam",
                format!("state tracks {} parameters, got {}", self.m.len(), params.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(param_err(
                    "adam",
                    format!(
                        "parameter {i}: {} values, gradient {}, state {}",
                        p.len(),
                        g.len(),
                        self.m[i].len()
                    ),
                ));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Updates every parameter of `module` from its accumulated gradient
    /// (absent gradients count as zero), replacing each with a fresh leaf.
    pub fn step_module<M: Module + ?Sized>(&mut self, module: &mut M, lr: f64) -> Result<()> {
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut grads: Vec<Vec<f64>> = Vec::new();
        module.visit(&mut |_, t| {
            values.push(t.to_vec());
            grads.push(t.grad().unwrap_or_else(|| vec![0.0; t.numel()]));
        });
        {
            let mut views: Vec<&mut [f64]> = values.iter_mut().map(|v| v.as_mut_slice()).collect();
            let gviews: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            self.update(&mut views, &gviews, lr)?;
        }
        let mut it = values.into_iter();
        module.visit_mut(&mut |_, t| {
            let data = it.next().expect("visit order changed between passes");
            *t = Tensor::param(t.shape(), data).expect("shape preserved");
        });
        Ok(())
    }
}

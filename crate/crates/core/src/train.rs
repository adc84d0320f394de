//! Losses, the symmetric training step and the training loop.
//!
//! `x` is the source face (plain group), `y` the reference (makeup group).
//! `D_X` judges images in `x`'s style, `D_Y` those in `y`'s style.

use std::fmt::Write as _;
use std::path::Path;

use fat_tensor::{checkpoint, AdamConfig, AdamState, Module, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FatError, Result};
use crate::face::{self, part_landmarks, FaceSample};
use crate::layers::{visit_mut_nested, visit_nested};
use crate::model::{Discriminator, FeatureStack, Generator, GeneratorConfig, Side};
use crate::pgt::{color_pgt, spatial_pgt};

/// Weights of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub adv: f64,
    pub cyc: f64,
    pub per: f64,
    pub make: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 1.0,
            cyc: 10.0,
            per: 0.05,
            make: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.adv, self.cyc, self.per, self.make];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || all.iter().all(|&w| w == 0.0) {
            return Err(FatError::param(
                "loss_weights",
                format!("weights must be finite, nonnegative and not all zero: {all:?}"),
            ));
        }
        Ok(())
    }
}

/// Four-term adversarial loss of both discriminators (mean BCE per term).
pub fn loss_discriminators(dx_real: &Tensor, dy_real: &Tensor, dx_fake: &Tensor, dy_fake: &Tensor) -> Result<Tensor> {
    Ok(dx_real
        .bce_with_logits(1.0)
        .add(&dy_real.bce_with_logits(1.0))?
        .add(&dx_fake.bce_with_logits(0.0))?
        .add(&dy_fake.bce_with_logits(0.0))?)
}

/// Everything the generator objective reads for one pair.
pub struct GeneratorTerms<'a> {
    pub x: &'a Tensor,
    pub y: &'a Tensor,
    /// `G(x, y)`.
    pub xy: &'a Tensor,
    /// `G(y, x)`.
    pub yx: &'a Tensor,
    /// `G(G(x, y), x)`.
    pub x_cycle: &'a Tensor,
    /// `G(G(y, x), y)`.
    pub y_cycle: &'a Tensor,
    /// `D_X(G(y, x))` logits.
    pub dx_fake: &'a Tensor,
    /// `D_Y(G(x, y))` logits.
    pub dy_fake: &'a Tensor,
    pub pgt_xy: Option<&'a Tensor>,
    pub pgt_yx: Option<&'a Tensor>,
}

/// Unweighted components and the weighted total.
#[derive(Clone, Debug)]
pub struct GeneratorLoss {
    pub total: Tensor,
    pub adv: Tensor,
    pub cyc: Tensor,
    pub per: Tensor,
    pub make: Tensor,
}

pub fn loss_generator(t: &GeneratorTerms<'_>, features: &FeatureStack, w: &LossWeights) -> Result<GeneratorLoss> {
    let adv = t.dx_fake.bce_with_logits(1.0).add(&t.dy_fake.bce_with_logits(1.0))?;
    let cyc = t.x_cycle.l1_loss(t.x)?.add(&t.y_cycle.l1_loss(t.y)?)?;
    let per = features
        .features(t.xy)?
        .mse_loss(&features.features(t.x)?.detach())?
        .add(&features.features(t.yx)?.mse_loss(&features.features(t.y)?.detach())?)?;
    let make = match (t.pgt_xy, t.pgt_yx) {
        (Some(a), Some(b)) => t.xy.mse_loss(a)?.add(&t.yx.mse_loss(b)?)?,
        _ if w.make > 0.0 => {
            return Err(FatError::Contract(
                "makeup loss weighted but pseudo ground truth missing".into(),
            ))
        }
        _ => Tensor::scalar(0.0),
    };
    let total = adv
        .scale(w.adv)
        .add(&cyc.scale(w.cyc))?
        .add(&per.scale(w.per))?
        .add(&make.scale(w.make))?;
    Ok(GeneratorLoss {
        total,
        adv,
        cyc,
        per,
        make,
    })
}

/// A training pair with its cached pseudo ground truth in both directions.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub x: FaceSample,
    pub y: FaceSample,
    pub pgt_xy: Tensor,
    pub pgt_yx: Tensor,
}

/// Color PGT for `G(x, y)` and `G(y, x)`, plus the spatial PGT of every
/// active part when the spatial stage is on. Pairs are processed in
/// parallel; the result order matches the input.
pub fn prepare_pairs(pairs: Vec<(FaceSample, FaceSample)>, config: &GeneratorConfig) -> Result<Vec<TrainPair>> {
    use rayon::prelude::*;
    let spatial_parts: Vec<u8> = if config.spatial {
        config
            .active_labels
            .iter()
            .copied()
            .filter(|&l| part_landmarks(l).is_some())
            .collect()
    } else {
        Vec::new()
    };
    let make = |s: &FaceSample, r: &FaceSample| -> Result<Tensor> {
        let mut g = color_pgt(s, r)?;
        for &l in &spatial_parts {
            g = spatial_pgt(&g, s, r, l)?;
        }
        Ok(g.image)
    };
    pairs
        .into_par_iter()
        .map(|(x, y)| {
            let pgt_xy = make(&x, &y)?;
            let pgt_yx = make(&y, &x)?;
            Ok(TrainPair { x, y, pgt_xy, pgt_yx })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub generator: GeneratorConfig,
    pub weights: LossWeights,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            generator: GeneratorConfig::default(),
            weights: LossWeights::default(),
            lr: 2e-4,
            steps: 300,
            seed: 0,
            adam: AdamConfig {
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
        }
    }
}

impl TrainConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown keys are errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let body = line.split('#').next().unwrap_or("").trim();
            let at = offset;
            offset += line.len();
            if body.is_empty() {
                continue;
            }
            let err = |msg: String| FatError::Format {
                path: origin.to_string(),
                offset: at as u64,
                msg,
            };
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {body:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: bad number {v:?}")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: bad integer {v:?}")));
            let g = &mut c.generator;
            match key {
                "size" => g.size = int(value)?,
                "base_width" => g.base_width = int(value)?,
                "heads" => g.heads = int(value)?,
                "d_k" => g.d_k = int(value)?,
                "lattice" => g.lattice = int(value)?,
                "spatial" => {
                    g.spatial = value
                        .parse()
                        .map_err(|_| err(format!("spatial: expected true/false, got {value:?}")))?
                }
                "active_labels" => g.active_labels = face::parse_label_set(value)?,
                "lambda_adv" => c.weights.adv = num(value)?,
                "lambda_cyc" => c.weights.cyc = num(value)?,
                "lambda_per" => c.weights.per = num(value)?,
                "lambda_make" => c.weights.make = num(value)?,
                "lr" => c.lr = num(value)?,
                "steps" => c.steps = int(value)?,
                "seed" => c.seed = value.parse().map_err(|_| err(format!("seed: bad integer {value:?}")))?,
                "beta1" => c.adam.beta1 = num(value)?,
                "beta2" => c.adam.beta2 = num(value)?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.weights.validate()?;
        if !(self.lr > 0.0) {
            return Err(FatError::param(
                "train_config",
                format!("learning rate must be positive, got {}", self.lr),
            ));
        }
        Ok(())
    }
}

/// `D_X` and `D_Y`, optimized together.
#[derive(Clone, Debug)]
pub struct Discriminators {
    pub dx: Discriminator,
    pub dy: Discriminator,
}

impl Module for Discriminators {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_nested(&self.dx, "dx", f);
        visit_nested(&self.dy, "dy", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_mut_nested(&mut self.dx, "dx", f);
        visit_mut_nested(&mut self.dy, "dy", f);
    }
}

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub iter: u64,
    pub j_d: f64,
    pub j_g: f64,
    pub adv: f64,
    pub cyc: f64,
    pub per: f64,
    pub make: f64,
}

pub const LOSS_HEADER: &str = "iter,J_D,J_G,adv,cyc,per,make";

pub fn format_loss_csv(rows: &[LossRow]) -> String {
    let mut s = format!("{LOSS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iter, r.j_d, r.j_g, r.adv, r.cyc, r.per, r.make
        );
    }
    s
}

pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminators: Discriminators,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
    pub features: FeatureStack,
    pub iter: u64,
    pub history: Vec<LossRow>,
}

fn finite(component: &'static str, t: &Tensor, iter: u64) -> Result<f64> {
    let v = t.item();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FatError::NonFinite { component, iter })
    }
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let base = config.generator.base_width;
        Ok(TrainState {
            generator: Generator::new(config.generator.clone(), config.seed)?,
            discriminators: Discriminators {
                dx: Discriminator::new(base, config.seed.wrapping_add(1)),
                dy: Discriminator::new(base, config.seed.wrapping_add(2)),
            },
            opt_g: AdamState::new(config.adam),
            opt_d: AdamState::new(config.adam),
            features: FeatureStack::default(),
            iter: 0,
            history: Vec::new(),
            config,
        })
    }

    /// Discriminator update, then one generator update on the summed
    /// symmetric losses. Gradients are reset before each update.
    pub fn step(&mut self, pair: &TrainPair) -> Result<LossRow> {
        let iter = self.iter;
        let (xs, ys) = (Side::from(&pair.x), Side::from(&pair.y));
        let g = &self.generator;
        let xy = g.forward(xs, ys)?.image;
        let yx = g.forward(ys, xs)?.image;

        let d = &self.discriminators;
        let j_d = loss_discriminators(
            &d.dx.forward(&pair.x.image)?,
            &d.dy.forward(&pair.y.image)?,
            &d.dx.forward(&yx.detach())?,
            &d.dy.forward(&xy.detach())?,
        )?;
        let j_d_value = finite("J_D", &j_d, iter)?;
        self.discriminators.zero_grad();
        j_d.backward()?;
        self.opt_d.step_module(&mut self.discriminators, self.config.lr)?;

        let g = &self.generator;
        let x_cycle = g.forward(xs.with_image(&xy), xs)?.image;
        let y_cycle = g.forward(ys.with_image(&yx), ys)?.image;
        let d = &self.discriminators;
        let terms = GeneratorTerms {
            x: &pair.x.image,
            y: &pair.y.image,
            xy: &xy,
            yx: &yx,
            x_cycle: &x_cycle,
            y_cycle: &y_cycle,
            dx_fake: &d.dx.forward(&yx)?,
            dy_fake: &d.dy.forward(&xy)?,
            pgt_xy: Some(&pair.pgt_xy),
            pgt_yx: Some(&pair.pgt_yx),
        };
        let loss = loss_generator(&terms, &self.features, &self.config.weights)?;
        let row = LossRow {
            iter,
            j_d: j_d_value,
            adv: finite("adv", &loss.adv, iter)?,
            cyc: finite("cyc", &loss.cyc, iter)?,
            per: finite("per", &loss.per, iter)?,
            make: finite("make", &loss.make, iter)?,
            j_g: finite("J_G", &loss.total, iter)?,
        };
        self.generator.zero_grad();
        loss.total.backward()?;
        self.opt_g.step_module(&mut self.generator, self.config.lr)?;
        self.iter += 1;
        self.history.push(row);
        Ok(row)
    }

    /// All parameters plus the generator configuration record.
    pub fn checkpoint_entries(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("meta.config".to_string(), self.config.generator.to_meta())];
        self.generator
            .visit(&mut |n, t| out.push((format!("g.{n}"), t.clone())));
        self.discriminators
            .visit(&mut |n, t| out.push((n.to_string(), t.clone())));
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        checkpoint::write(path, &self.checkpoint_entries()).map_err(|e| match e {
            fat_tensor::TensorError::Io(io) => FatError::io(path, io),
            other => other.into(),
        })
    }
}

/// Order of pair indices for `epoch`: a seeded shuffle.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0xA076_1D64_78BD_642F));
    idx.shuffle(&mut rng);
    idx
}

/// Runs `config.steps` steps, drawing pairs without replacement within
/// each epoch. `on_step` sees every logged row.
pub fn fit(pairs: &[TrainPair], config: TrainConfig, mut on_step: impl FnMut(&LossRow)) -> Result<TrainState> {
    if pairs.is_empty() {
        return Err(FatError::param("fit", "empty dataset"));
    }
    let mut state = TrainState::new(config)?;
    let mut epoch = 0;
    while (state.iter as usize) < state.config.steps {
        for i in epoch_order(pairs.len(), state.config.seed, epoch) {
            if state.iter as usize >= state.config.steps {
                break;
            }
            let row = state.step(&pairs[i])?;
            on_step(&row);
        }
        epoch += 1;
    }
    Ok(state)
}

/// Rebuilds a generator from a checkpoint written by [`TrainState::save`].
pub fn load_generator(path: impl AsRef<Path>) -> Result<Generator> {
    let path = path.as_ref();
    let entries = checkpoint::read(path).map_err(|e| match e {
        fat_tensor::TensorError::Io(io) => FatError::io(path, io),
        fat_tensor::TensorError::Format { offset, msg } => FatError::Format {
            path: path.display().to_string(),
            offset,
            msg,
        },
        other => other.into(),
    })?;
    let meta = entries
        .iter()
        .find(|(n, _)| n == "meta.config")
        .ok_or_else(|| FatError::Schema(format!("{}: checkpoint lacks meta.config", path.display())))?;
    let config = GeneratorConfig::from_meta(&meta.1)?;
    let mut g = Generator::new(config, 0)?;
    let own: Vec<(String, Tensor)> = entries
        .iter()
        .filter_map(|(n, t)| n.strip_prefix("g.").map(|s| (s.to_string(), t.clone())))
        .collect();
    checkpoint::load_into(&mut g, &own).map_err(|e| FatError::Schema(format!("{}: {e}", path.display())))?;
    Ok(g)
}

//! Generator, patch discriminator and the frozen perceptual feature stack.
//!
//! Generator layout for an `S×S` image with base width `c`:
//!
//! ```text
//! encoder (shared)  3→c s1, c→2c s2, 2c→4c s2        conv+IN+ReLU
//! branches          3 residual blocks on each side    at S/4, d = 4c
//! attention         FAT, optionally Spatial FAT
//! tail              2 residual blocks
//! decoder           4c→2c deconv s2, 2c→c deconv s2, c→3 conv, tanh
//! ```

use std::collections::BTreeMap;

use fat_tensor::{Module, Tensor, DEFAULT_EPS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{fat_forward, landmark_embedding, FatParams};
use crate::error::{FatError, Result};
use crate::face::{self, FaceSample, LandmarkSet, ParsingMask, NUM_LANDMARKS};
use crate::layers::{visit_mut_nested, visit_nested, Conv, Deconv};
use crate::spatial::{spatial_fat_forward, SpatialParams};

const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Square image side; divisible by 16.
    pub size: usize,
    /// Channel width of the first layer; the bottleneck has `4·base`.
    pub base_width: usize,
    pub heads: usize,
    /// Per-head projection width.
    pub d_k: usize,
    pub spatial: bool,
    /// Labels the spatial warp may move.
    pub active_labels: Vec<u8>,
    /// Control lattice side; must divide `size/4`.
    pub lattice: usize,
    pub num_landmarks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            size: 64,
            base_width: 16,
            heads: 2,
            d_k: 32,
            spatial: false,
            active_labels: vec![face::LEFT_BROW, face::RIGHT_BROW],
            lattice: 8,
            num_landmarks: NUM_LANDMARKS,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FatError::param("generator_config", msg));
        if self.size < 16 || self.size % 16 != 0 {
            return bad(format!("size {} must be a positive multiple of 16", self.size));
        }
        if self.base_width == 0 || self.heads == 0 || self.d_k == 0 || self.num_landmarks == 0 {
            return bad("widths, heads and landmark count must be positive".into());
        }
        if self.spatial && (self.lattice < 2 || (self.size / 4) % self.lattice != 0) {
            return bad(format!(
                "lattice {} must divide the {} bottleneck",
                self.lattice,
                self.size / 4
            ));
        }
        if self.active_labels.iter().any(|&l| l > face::MAX_LABEL) {
            return bad(format!("undefined active label in {:?}", self.active_labels));
        }
        Ok(())
    }

    pub fn bottleneck_width(&self) -> usize {
        4 * self.base_width
    }

    pub fn bottleneck_size(&self) -> usize {
        self.size / 4
    }

    /// Numeric encoding stored alongside checkpoints.
    pub fn to_meta(&self) -> Tensor {
        let labels = self.active_labels.iter().fold(0u32, |m, &l| m | 1 << l);
        let v = [
            self.size,
            self.base_width,
            self.heads,
            self.d_k,
            self.spatial as usize,
            labels as usize,
            self.lattice,
            self.num_landmarks,
        ];
        Tensor::new(&[v.len()], v.iter().map(|&x| x as f64).collect()).expect("shape")
    }

    pub fn from_meta(meta: &Tensor) -> Result<Self> {
        let v: Vec<usize> = meta.data().iter().map(|&x| x as usize).collect();
        if v.len() != 8 {
            return Err(FatError::Schema(format!(
                "config record has {} fields, expected 8",
                v.len()
            )));
        }
        let c = GeneratorConfig {
            size: v[0],
            base_width: v[1],
            heads: v[2],
            d_k: v[3],
            spatial: v[4] != 0,
            active_labels: (0..=face::MAX_LABEL).filter(|l| v[5] >> l & 1 == 1).collect(),
            lattice: v[6],
            num_landmarks: v[7],
        };
        c.validate()?;
        Ok(c)
    }
}

fn norm_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.instance_norm(DEFAULT_EPS)?.relu())
}

/// `relu(x + IN(conv(x)))`.
fn residual(block: &Conv, x: &Tensor) -> Result<Tensor> {
    Ok(x.add(&block.forward(x, 1)?.instance_norm(DEFAULT_EPS)?)?.relu())
}

/// One face as the generator sees it.
#[derive(Clone, Copy)]
pub struct Side<'a> {
    /// `3×S×S` in `[0, 1]`.
    pub image: &'a Tensor,
    pub landmarks: &'a LandmarkSet,
    pub mask: &'a ParsingMask,
}

impl<'a> From<&'a FaceSample> for Side<'a> {
    fn from(s: &'a FaceSample) -> Self {
        Side {
            image: &s.image,
            landmarks: &s.landmarks,
            mask: &s.mask,
        }
    }
}

impl<'a> Side<'a> {
    pub fn with_image(self, image: &'a Tensor) -> Self {
        Side { image, ..self }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorOutput {
    pub image: Tensor,
    /// The spatial warp fell back to the identity.
    pub warp_fallback: bool,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub encoder: [Conv; 3],
    pub source_blocks: Vec<Conv>,
    pub reference_blocks: Vec<Conv>,
    pub tail_blocks: Vec<Conv>,
    pub fat: FatParams,
    pub spatial: Option<SpatialParams>,
    pub up: [Deconv; 2],
    pub out: Conv,
}

impl Generator {
    /// Seeded initialization. The spatial predictor starts at the identity
    /// and draws nothing from the RNG, so the same seed gives the same
    /// remaining weights with the spatial stage on or off.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.base_width;
        let d = config.bottleneck_width();
        let encoder = [
            Conv::new(&mut rng, 3, c, KERNEL),
            Conv::new(&mut rng, c, 2 * c, KERNEL),
            Conv::new(&mut rng, 2 * c, d, KERNEL),
        ];
        let mut blocks = |n| (0..n).map(|_| Conv::new(&mut rng, d, d, KERNEL)).collect::<Vec<_>>();
        let source_blocks = blocks(3);
        let reference_blocks = blocks(3);
        let tail_blocks = blocks(2);
        let fat = FatParams::new(&mut rng, d, config.num_landmarks, config.heads, config.d_k)?;
        let up = [
            Deconv::new(&mut rng, d, 2 * c, KERNEL),
            Deconv::new(&mut rng, 2 * c, c, KERNEL),
        ];
        let out = Conv::new(&mut rng, c, 3, KERNEL);
        let spatial = config.spatial.then(|| SpatialParams::identity(2 * d, config.lattice));
        Ok(Generator {
            config,
            encoder,
            source_blocks,
            reference_blocks,
            tail_blocks,
            fat,
            spatial,
            up,
            out,
        })
    }

    fn encode(&self, image: &Tensor, blocks: &[Conv]) -> Result<Tensor> {
        let s = image.shape();
        if s != [3, self.config.size, self.config.size] {
            return Err(FatError::param(
                "generator",
                format!("image {s:?} does not match configured size {}", self.config.size),
            ));
        }
        let mut h = image.scale(2.0).add_scalar(-1.0);
        for (conv, stride) in self.encoder.iter().zip([1, 2, 2]) {
            h = norm_relu(&conv.forward(&h, stride)?)?;
        }
        for b in blocks {
            h = residual(b, &h)?;
        }
        Ok(h)
    }

    /// `G(source, reference)`: the source face wearing the reference's
    /// attributes, `3×S×S` in `[0, 1]`.
    pub fn forward(&self, source: Side<'_>, reference: Side<'_>) -> Result<GeneratorOutput> {
        let x = self.encode(source.image, &self.source_blocks)?;
        let y = self.encode(reference.image, &self.reference_blocks)?;
        let n = self.config.bottleneck_size();
        for lm in [source.landmarks, reference.landmarks] {
            if lm.len() != self.config.num_landmarks {
                return Err(FatError::Schema(format!(
                    "{} landmarks, model expects {}",
                    lm.len(),
                    self.config.num_landmarks
                )));
            }
        }
        let le_x = landmark_embedding(n, n, source.landmarks)?;
        let le_y = landmark_embedding(n, n, reference.landmarks)?;
        let (mut h, warp_fallback) = match &self.spatial {
            Some(sp) => {
                let w = spatial_fat_forward(
                    &x,
                    &y,
                    &le_x,
                    &le_y,
                    source.mask,
                    &self.config.active_labels,
                    &self.fat,
                    sp,
                )?;
                (w.output, w.fallback)
            }
            None => (fat_forward(&x, &y, &le_x, &le_y, &self.fat)?, false),
        };
        for b in &self.tail_blocks {
            h = residual(b, &h)?;
        }
        for up in &self.up {
            h = norm_relu(&up.forward(&h, 2)?)?;
        }
        let image = self.out.forward(&h, 1)?.tanh().add_scalar(1.0).scale(0.5);
        Ok(GeneratorOutput { image, warp_fallback })
    }
}

impl Module for Generator {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, c) in self.encoder.iter().enumerate() {
            c.visit_as(&format!("enc{i}"), f);
        }
        for (name, blocks) in [
            ("src", &self.source_blocks),
            ("ref", &self.reference_blocks),
            ("tail", &self.tail_blocks),
        ] {
            for (i, c) in blocks.iter().enumerate() {
                c.visit_as(&format!("{name}{i}"), f);
            }
        }
        visit_nested(&self.fat, "fat", f);
        if let Some(sp) = &self.spatial {
            visit_nested(sp, "spatial", f);
        }
        for (i, u) in self.up.iter().enumerate() {
            u.visit_as(&format!("up{i}"), f);
        }
        self.out.visit_as("out", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, c) in self.encoder.iter_mut().enumerate() {
            c.visit_mut_as(&format!("enc{i}"), f);
        }
        for (name, blocks) in [
            ("src", &mut self.source_blocks),
            ("ref", &mut self.reference_blocks),
            ("tail", &mut self.tail_blocks),
        ] {
            for (i, c) in blocks.iter_mut().enumerate() {
                c.visit_mut_as(&format!("{name}{i}"), f);
            }
        }
        visit_mut_nested(&mut self.fat, "fat", f);
        if let Some(sp) = &mut self.spatial {
            visit_mut_nested(sp, "spatial", f);
        }
        for (i, u) in self.up.iter_mut().enumerate() {
            u.visit_mut_as(&format!("up{i}"), f);
        }
        self.out.visit_mut_as("out", f);
    }
}

/// Patch discriminator: four stride-2 3×3 convolutions, logits at `S/16`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub layers: [Conv; 4],
}

impl Discriminator {
    pub fn new(base_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = base_width;
        Discriminator {
            layers: [
                Conv::new(&mut rng, 3, c, KERNEL),
                Conv::new(&mut rng, c, 2 * c, KERNEL),
                Conv::new(&mut rng, 2 * c, 4 * c, KERNEL),
                Conv::new(&mut rng, 4 * c, 1, KERNEL),
            ],
        }
    }

    /// `1×S/16×S/16` logits.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let mut h = image.scale(2.0).add_scalar(-1.0);
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h, 2)?;
            if i + 1 < self.layers.len() {
                h = h.relu();
            }
        }
        Ok(h)
    }
}

impl Module for Discriminator {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_as(&format!("l{i}"), f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut_as(&format!("l{i}"), f);
        }
    }
}

/// Frozen random convolution stack standing in for pretrained features.
#[derive(Clone, Debug)]
pub struct FeatureStack {
    layers: [Conv; 3],
}

impl FeatureStack {
    pub const SEED: u64 = 0x5EED_F00D;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freeze = |c: Conv| Conv {
            w: c.w.detach(),
            b: c.b.detach(),
        };
        FeatureStack {
            layers: [
                freeze(Conv::new(&mut rng, 3, 8, KERNEL)),
                freeze(Conv::new(&mut rng, 8, 16, KERNEL)),
                freeze(Conv::new(&mut rng, 16, 16, KERNEL)),
            ],
        }
    }

    /// Last-layer activations.
    pub fn features(&self, image: &Tensor) -> Result<Tensor> {
        let mut h = image.scale(2.0).add_scalar(-1.0);
        for (l, stride) in self.layers.iter().zip([1, 2, 2]) {
            h = l.forward(&h, stride)?.relu();
        }
        Ok(h)
    }
}

impl Default for FeatureStack {
    fn default() -> Self {
        Self::new(Self::SEED)
    }
}

/// Parameter shapes by name, for diagnostics.
pub fn describe<M: Module + ?Sized>(m: &M) -> BTreeMap<String, Vec<usize>> {
    let mut out = BTreeMap::new();
    m.visit(&mut |n, t| {
        out.insert(n.to_string(), t.shape().to_vec());
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_meta_round_trip() {
        let c = GeneratorConfig {
            spatial: true,
            active_labels: vec![2, 3, 6],
            ..Default::default()
        };
        assert_eq!(GeneratorConfig::from_meta(&c.to_meta()).unwrap(), c);
    }

    #[test]
    fn config_rejects_bad_sizes() {
        let c = GeneratorConfig {
            size: 40,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = GeneratorConfig {
            size: 48,
            spatial: true,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn discriminator_patch_extent() {
        let d = Discriminator::new(4, 1);
        let out = d.forward(&Tensor::full(&[3, 32, 32], 0.5)).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert!(out.all_finite());
    }
}

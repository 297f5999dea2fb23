//! Baseline, RoIPool and Feedback quality models.
//!
//! All three share the residual backbone. Heads emit a raw value `r` that is
//! reported on the opinion scale as `score_center + score_scale * r`; losses
//! are computed on raw (normalized) values.
//!
//! * Baseline: global mean+max pooling, two FC layers, one picture score.
//! * RoIPool: each region (the whole picture first, then the patches) is
//!   RoI-pooled and scored by one shared two-layer head.
//! * Feedback: the RoIPool head becomes Head0; Head1 is one FC layer over
//!   Head0's picture and patch outputs concatenated with the global pooling
//!   of the feature map, and gives the final picture score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::backbone::{Backbone, BackboneCache, BackboneConfig};
use super::layers::{relu_vec, relu_vec_backward, Linear};
use super::pool::{max_backward_into, pool_global, pool_global_backward, roi_pool, Pooled, ROI_GRID};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imgcore::{white_pad_to, ImageBuf, Rect};
use crate::patcher::{patch_dims, PATCH_SCALES};
use crate::rng::Rng;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    RoiPool,
    Feedback,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Baseline, ModelKind::RoiPool, ModelKind::Feedback];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::RoiPool => "roipool",
            ModelKind::Feedback => "feedback",
        }
    }

    /// Number of heads (Feedback has Head0 and Head1).
    pub fn head_count(self) -> usize {
        if self == ModelKind::Feedback {
            2
        } else {
            1
        }
    }

    pub fn uses_patches(self) -> bool {
        self != ModelKind::Baseline
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub backbone: BackboneConfig,
    /// Width of the hidden FC layer in the two-layer heads.
    pub head_hidden: usize,
    /// Patch regions per picture consumed by Head1.
    pub patches: usize,
    pub score_center: f64,
    pub score_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Feedback,
            backbone: BackboneConfig::default(),
            head_hidden: 64,
            patches: PATCH_SCALES.len(),
            score_center: 50.0,
            score_scale: 25.0,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig { kind, ..Default::default() }
    }

    /// Tiny model (a few thousand parameters, D = 4) for checks and tests.
    pub fn toy(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            backbone: BackboneConfig {
                in_channels: 3,
                stem_channels: 4,
                stem_stride: 2,
                widths: vec![4, 8],
                blocks_per_stage: vec![1, 1],
                strides: vec![1, 2],
            },
            head_hidden: 8,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.head_hidden == 0 {
            return Err(Error::Config("head_hidden must be positive".into()));
        }
        if !(self.score_scale.is_finite() && self.score_scale > 0.0 && self.score_center.is_finite()) {
            return Err(Error::Config("score scale must be positive and finite".into()));
        }
        if self.kind == ModelKind::Feedback && self.patches == 0 {
            return Err(Error::Config("feedback model needs at least one patch".into()));
        }
        Ok(())
    }
}

/// Two FC layers with a ReLU between them, one output.
#[derive(Clone, Debug, PartialEq)]
pub struct Head<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Clone, Debug)]
struct HeadCache<T> {
    input: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Real> Head<T> {
    fn new(inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        Head { fc1: Linear::new(inputs, hidden, 2.0, rng), fc2: Linear::new(hidden, 1, 1.0, rng) }
    }

    fn forward(&self, x: Vec<T>) -> Result<(T, HeadCache<T>)> {
        let hidden = relu_vec(&self.fc1.forward(&x)?);
        let out = self.fc2.forward(&hidden)?[0];
        Ok((out, HeadCache { input: x, hidden }))
    }

    fn backward(&mut self, cache: &HeadCache<T>, grad: T) -> Result<Vec<T>> {
        let gh = self.fc2.backward(&cache.hidden, &[grad])?;
        let gpre = relu_vec_backward(&cache.hidden, &gh);
        self.fc1.backward(&cache.input, &gpre)
    }
}

/// Scores on the opinion scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Scores<T> {
    /// Final picture score.
    pub picture: T,
    /// Head0's own picture score (Feedback only).
    pub head0_picture: Option<T>,
    /// One shared-head score per patch region (empty for Baseline).
    pub patches: Vec<T>,
}

/// Supervision for one picture.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets<T> {
    pub picture: T,
    pub patches: Vec<T>,
}

/// Intermediate values of one forward pass, consumed by the backward pass.
pub struct ForwardCache<T> {
    backbone: BackboneCache<T>,
    map_shape: Vec<usize>,
    global: Option<Pooled<T>>,
    base: Option<HeadCache<T>>,
    regions: Vec<(Pooled<T>, HeadCache<T>)>,
    head1_input: Option<Vec<T>>,
    /// Raw outputs in loss order: final picture, then (Feedback) Head0's
    /// picture, then patches.
    pub raw: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityModel<T> {
    pub config: ModelConfig,
    pub backbone: Backbone<T>,
    /// Baseline head (input 2C) or the shared region head / Head0 (input 4C).
    pub head: Head<T>,
    /// Feedback's Head1.
    pub head1: Option<Linear<T>>,
}

/// Converts a picture into a `[3, H, W]` network input centered on zero.
pub fn image_tensor<T: Real>(img: &ImageBuf<T>) -> Tensor<T> {
    let rgb = img.to_rgb();
    let half = T::lit(0.5);
    let v = rgb.samples().iter().map(|&s| s - half).collect();
    Tensor::from_vec(&[3, img.height(), img.width()], v).expect("rgb layout")
}

/// Centered white padding to `pad_side` when the picture fits, otherwise to
/// the next multiple of `d` in each dimension. Returns the padded picture
/// and the rect of the original content.
pub fn prepare_picture<T: Real>(img: &ImageBuf<T>, pad_side: usize, d: usize) -> Result<(ImageBuf<T>, Rect)> {
    let (w, h) = (img.width(), img.height());
    let d = d.max(1);
    if w <= pad_side && h <= pad_side && pad_side % d == 0 {
        white_pad_to(img, pad_side, pad_side)
    } else {
        white_pad_to(img, w.div_ceil(d) * d, h.div_ceil(d) * d)
    }
}

/// Patch regions centered in `content` at the standard patch scales, used
/// when a picture comes without patches.
pub fn default_rois(content: Rect, count: usize) -> Result<Vec<Rect>> {
    (0..count)
        .map(|i| {
            let scale = PATCH_SCALES[i % PATCH_SCALES.len()];
            let (pw, ph) = patch_dims(content.width(), content.height(), scale)?;
            Rect::from_origin(
                content.left + (content.width() - pw) / 2,
                content.top + (content.height() - ph) / 2,
                pw,
                ph,
            )
        })
        .collect()
}

impl<T: Real> QualityModel<T> {
    pub fn new(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let backbone = Backbone::new(&config.backbone, rng)?;
        let c = config.backbone.out_channels();
        let head_in = if config.kind == ModelKind::Baseline { 2 * c } else { ROI_GRID * ROI_GRID * c };
        let head = Head::new(head_in, config.head_hidden, rng);
        let head1 = (config.kind == ModelKind::Feedback)
            .then(|| Linear::new(1 + config.patches + 2 * c, 1, 1.0, rng));
        Ok(QualityModel { config: config.clone(), backbone, head, head1 })
    }

    pub fn seeded(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::new(config, &mut crate::rng::seeded(seed))
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn downsampling(&self) -> usize {
        self.config.backbone.downsampling()
    }

    pub fn to_score(&self, raw: T) -> T {
        T::lit(self.config.score_center) + T::lit(self.config.score_scale) * raw
    }

    pub fn to_raw(&self, score: T) -> T {
        (score - T::lit(self.config.score_center)) / T::lit(self.config.score_scale)
    }

    /// Forward pass on a prepared `[3, H, W]` input. Baseline ignores `rois`;
    /// Feedback needs exactly `config.patches` of them.
    pub fn forward_cached(&self, x: &Tensor<T>, rois: &[Rect]) -> Result<ForwardCache<T>> {
        let (feat, bb) = self.backbone.forward_cached(x)?;
        let dims = (x.shape()[2], x.shape()[1]);
        let map_shape = feat.shape().to_vec();
        let kind = self.kind();
        if kind == ModelKind::Feedback && rois.len() != self.config.patches {
            return Err(Error::Shape(format!(
                "feedback model expects {} patch rois, got {}",
                self.config.patches,
                rois.len()
            )));
        }
        let mut cache = ForwardCache {
            backbone: bb,
            map_shape,
            global: None,
            base: None,
            regions: Vec::new(),
            head1_input: None,
            raw: Vec::new(),
        };
        if kind == ModelKind::Baseline {
            let g = pool_global(&feat)?;
            let (out, hc) = self.head.forward(g.values.clone())?;
            cache.global = Some(g);
            cache.base = Some(hc);
            cache.raw.push(out);
            return Ok(cache);
        }
        let whole = Rect::full(dims.0, dims.1);
        let mut head0 = Vec::with_capacity(rois.len() + 1);
        for &r in std::iter::once(&whole).chain(rois) {
            let p = roi_pool(&feat, r, dims)?;
            let (out, hc) = self.head.forward(p.values.clone())?;
            head0.push(out);
            cache.regions.push((p, hc));
        }
        if let Some(h1) = &self.head1 {
            let g = pool_global(&feat)?;
            let mut input = head0.clone();
            input.extend_from_slice(&g.values);
            cache.raw.push(h1.forward(&input)?[0]);
            cache.global = Some(g);
            cache.head1_input = Some(input);
        }
        cache.raw.extend(head0);
        Ok(cache)
    }

    /// Accumulates parameter gradients given `d loss / d raw` for every entry
    /// of `cache.raw`.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grad_raw: &[T]) -> Result<()> {
        if grad_raw.len() != cache.raw.len() {
            return Err(Error::Shape("gradient count differs from output count".into()));
        }
        let mut gfeat = Tensor::zeros(&cache.map_shape);
        if let (Some(hc), Some(g)) = (&cache.base, &cache.global) {
            let gin = self.head.backward(hc, grad_raw[0])?;
            gfeat = pool_global_backward(&cache.map_shape, g, &gin);
        } else {
            let mut g0 = grad_raw.to_vec();
            if let (Some(h1), Some(input), Some(g)) = (&mut self.head1, &cache.head1_input, &cache.global) {
                let gin = h1.backward(input, &[grad_raw[0]])?;
                let n0 = cache.regions.len();
                g0 = grad_raw[1..].to_vec();
                for (a, &b) in g0.iter_mut().zip(&gin[..n0]) {
                    *a = *a + b;
                }
                gfeat = pool_global_backward(&cache.map_shape, g, &gin[n0..]);
            }
            for ((p, hc), &g) in cache.regions.iter().zip(&g0) {
                let gin = self.head.backward(hc, g)?;
                max_backward_into(gfeat.values_mut(), &p.argmax, &gin);
            }
        }
        self.backbone.backward(&cache.backbone, &gfeat)
    }

    fn scores_from_raw(&self, raw: &[T]) -> Scores<T> {
        let s: Vec<T> = raw.iter().map(|&r| self.to_score(r)).collect();
        match self.kind() {
            ModelKind::Baseline => Scores { picture: s[0], head0_picture: None, patches: Vec::new() },
            ModelKind::RoiPool => Scores { picture: s[0], head0_picture: None, patches: s[1..].to_vec() },
            ModelKind::Feedback => Scores { picture: s[0], head0_picture: Some(s[1]), patches: s[2..].to_vec() },
        }
    }

    /// Scores for a prepared input.
    pub fn forward(&self, x: &Tensor<T>, rois: &[Rect]) -> Result<Scores<T>> {
        Ok(self.scores_from_raw(&self.forward_cached(x, rois)?.raw))
    }

    /// Raw loss targets aligned with [`ForwardCache::raw`].
    pub fn raw_targets(&self, t: &Targets<T>) -> Result<Vec<T>> {
        let mut out = vec![self.to_raw(t.picture)];
        match self.kind() {
            ModelKind::Baseline => return Ok(out),
            ModelKind::Feedback => out.push(self.to_raw(t.picture)),
            ModelKind::RoiPool => {}
        }
        out.extend(t.patches.iter().map(|&p| self.to_raw(p)));
        Ok(out)
    }

    /// Mean squared error over all supervised outputs, in raw units.
    pub fn sample_loss(&self, x: &Tensor<T>, rois: &[Rect], t: &Targets<T>) -> Result<T> {
        let cache = self.forward_cached(x, rois)?;
        let targets = self.raw_targets(t)?;
        check_targets(&cache.raw, &targets)?;
        Ok(mse(&cache.raw, &targets))
    }

    /// Loss of one sample; gradients scaled by `weight` are accumulated.
    pub fn sample_loss_backward(&mut self, x: &Tensor<T>, rois: &[Rect], t: &Targets<T>, weight: T) -> Result<T> {
        let cache = self.forward_cached(x, rois)?;
        let targets = self.raw_targets(t)?;
        check_targets(&cache.raw, &targets)?;
        let n = T::from_usize_lossy(targets.len());
        let grad: Vec<T> = cache
            .raw
            .iter()
            .zip(&targets)
            .map(|(&y, &t)| weight * T::lit(2.0) * (y - t) / n)
            .collect();
        self.backward(&cache, &grad)?;
        Ok(mse(&cache.raw, &targets))
    }

    /// Pads the picture, fills in centered default patches when none are
    /// given (and the model uses them), and scores it.
    pub fn predict(&self, img: &ImageBuf<T>, pad_side: usize, patches: Option<&[Rect]>) -> Result<Scores<T>> {
        let (padded, content) = prepare_picture(img, pad_side, self.downsampling())?;
        let rois: Vec<Rect> = match (self.kind(), patches) {
            (ModelKind::Baseline, _) => Vec::new(),
            (_, Some(p)) => p.iter().map(|r| r.translate(content.left, content.top)).collect(),
            (ModelKind::Feedback, None) => default_rois(content, self.config.patches)?,
            (ModelKind::RoiPool, None) => Vec::new(),
        };
        self.forward(&image_tensor(&padded), &rois)
    }

    /// Shared-head scores of arbitrary regions of a prepared input, computing
    /// the feature map once.
    pub fn score_regions(&self, x: &Tensor<T>, regions: &[Rect]) -> Result<Vec<T>> {
        if self.kind() == ModelKind::Baseline {
            return Err(Error::Capability("the baseline model has no region head".into()));
        }
        let feat = self.backbone.forward(x)?;
        let dims = (x.shape()[2], x.shape()[1]);
        regions
            .iter()
            .map(|&r| {
                let p = roi_pool(&feat, r, dims)?;
                Ok(self.to_score(self.head.forward(p.values)?.0))
            })
            .collect()
    }

    /// Number of backbone tensors at the front of [`Self::params`].
    pub fn backbone_param_count(&self) -> usize {
        self.backbone.params().len()
    }

    /// Parameters in checkpoint order: backbone, head fc1 (weight, bias),
    /// head fc2 (weight, bias), then Head1 (weight, bias) for Feedback.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.backbone.params();
        p.extend([&self.head.fc1.weight, &self.head.fc1.bias, &self.head.fc2.weight, &self.head.fc2.bias]);
        if let Some(h) = &self.head1 {
            p.extend([&h.weight, &h.bias]);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.backbone.params_mut();
        p.extend([
            &mut self.head.fc1.weight,
            &mut self.head.fc1.bias,
            &mut self.head.fc2.weight,
            &mut self.head.fc2.bias,
        ]);
        if let Some(h) = &mut self.head1 {
            p.extend([&mut h.weight, &mut h.bias]);
        }
        p
    }

    /// Names aligned with [`Self::params`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["stem.weight".to_string(), "stem.bias".to_string()];
        for (i, b) in self.backbone.blocks.iter().enumerate() {
            let mut layers = vec!["conv1", "conv2"];
            if b.shortcut.is_some() {
                layers.push("shortcut");
            }
            for l in layers {
                names.push(format!("block{i}.{l}.weight"));
                names.push(format!("block{i}.{l}.bias"));
            }
        }
        for l in ["head.fc1", "head.fc2"] {
            names.push(format!("{l}.weight"));
            names.push(format!("{l}.bias"));
        }
        if self.head1.is_some() {
            names.push("head1.weight".into());
            names.push("head1.bias".into());
        }
        names
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }
}

fn check_targets<T: Real>(raw: &[T], targets: &[T]) -> Result<()> {
    if raw.len() != targets.len() {
        return Err(Error::Shape(format!("{} outputs but {} targets", raw.len(), targets.len())));
    }
    Ok(())
}

fn mse<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / T::from_usize_lossy(a.len())
}

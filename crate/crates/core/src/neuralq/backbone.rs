//! Small residual CNN: a strided 3×3 stem followed by stages of basic
//! residual blocks (two 3×3 convolutions plus an identity or 1×1 projection
//! shortcut), ReLU after the stem and after every residual sum.

use serde::{Deserialize, Serialize};

use super::layers::{add, relu, relu_backward, Conv2d};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub stem_stride: usize,
    /// Output channels of each stage.
    pub widths: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    /// Stride of the first block of each stage.
    pub strides: Vec<usize>,
}

impl Default for BackboneConfig {
    /// Three stages of widths 16/32/64 with total downsampling 8.
    fn default() -> Self {
        BackboneConfig {
            in_channels: 3,
            stem_channels: 16,
            stem_stride: 2,
            widths: vec![16, 32, 64],
            blocks_per_stage: vec![2, 2, 2],
            strides: vec![1, 2, 2],
        }
    }
}

impl BackboneConfig {
    /// Total downsampling factor D.
    pub fn downsampling(&self) -> usize {
        self.stem_stride * self.strides.iter().product::<usize>()
    }

    pub fn out_channels(&self) -> usize {
        *self.widths.last().unwrap_or(&self.stem_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.blocks_per_stage.len() || self.widths.len() != self.strides.len() {
            return Err(Error::Config("widths, blocks_per_stage and strides must have equal length".into()));
        }
        if self.widths.is_empty() {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        if self.in_channels == 0 || self.stem_channels == 0 || self.widths.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.blocks_per_stage.contains(&0) {
            return Err(Error::Config("every stage needs at least one block".into()));
        }
        if self.stem_stride == 0 || self.strides.contains(&0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        if !self.downsampling().is_power_of_two() {
            return Err(Error::Config(format!("downsampling {} is not a power of two", self.downsampling())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub shortcut: Option<Conv2d<T>>,
}

struct BlockCache<T> {
    input: Tensor<T>,
    mid: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Real> Block<T> {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut Rng) -> Self {
        let shortcut = (cin != cout || stride != 1).then(|| Conv2d::new(cin, cout, 1, stride, 0, rng));
        Block {
            conv1: Conv2d::new(cin, cout, 3, stride, 1, rng),
            conv2: Conv2d::new(cout, cout, 3, 1, 1, rng),
            shortcut,
        }
    }

    fn forward(&self, x: Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        let mid = relu(&self.conv1.forward(&x)?);
        let c2 = self.conv2.forward(&mid)?;
        let sum = match &self.shortcut {
            Some(s) => add(&c2, &s.forward(&x)?)?,
            None => add(&c2, &x)?,
        };
        let out = relu(&sum);
        Ok((out.clone(), BlockCache { input: x, mid, out }))
    }

    fn backward(&mut self, cache: &BlockCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let gsum = relu_backward(&cache.out, grad_out);
        let gmid = self.conv2.backward(&cache.mid, &gsum)?;
        let gc1 = relu_backward(&cache.mid, &gmid);
        let gx = self.conv1.backward(&cache.input, &gc1)?;
        let gshort = match &mut self.shortcut {
            Some(s) => s.backward(&cache.input, &gsum)?,
            None => gsum,
        };
        add(&gx, &gshort)
    }

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = vec![&self.conv1.weight, &self.conv1.bias, &self.conv2.weight, &self.conv2.bias];
        if let Some(s) = &self.shortcut {
            p.extend([&s.weight, &s.bias]);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
        ];
        if let Some(s) = &mut self.shortcut {
            p.extend([&mut s.weight, &mut s.bias]);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone<T> {
    pub config: BackboneConfig,
    pub stem: Conv2d<T>,
    pub blocks: Vec<Block<T>>,
}

/// Activations retained by [`Backbone::forward_cached`] for the backward pass.
pub struct BackboneCache<T> {
    input: Tensor<T>,
    stem_out: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
}

impl<T: Real> Backbone<T> {
    pub fn new(config: &BackboneConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let stem = Conv2d::new(config.in_channels, config.stem_channels, 3, config.stem_stride, 1, rng);
        let mut blocks = Vec::new();
        let mut cin = config.stem_channels;
        for ((&w, &n), &s) in config.widths.iter().zip(&config.blocks_per_stage).zip(&config.strides) {
            for b in 0..n {
                blocks.push(Block::new(cin, w, if b == 0 { s } else { 1 }, rng));
                cin = w;
            }
        }
        Ok(Backbone { config: config.clone(), stem, blocks })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        let d = self.config.downsampling();
        if s.len() != 3 || s[0] != self.config.in_channels {
            return Err(Error::Shape(format!("backbone expects [{}, H, W], got {s:?}", self.config.in_channels)));
        }
        if s[1] == 0 || s[2] == 0 || s[1] % d != 0 || s[2] % d != 0 {
            return Err(Error::Shape(format!("spatial dims {}x{} not divisible by {d}", s[2], s[1])));
        }
        Ok(())
    }

    /// `[C, H/D, W/D]` feature map.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BackboneCache<T>)> {
        self.check_input(x)?;
        let stem_out = relu(&self.stem.forward(x)?);
        let mut h = stem_out.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, c) = b.forward(h)?;
            caches.push(c);
            h = out;
        }
        Ok((h, BackboneCache { input: x.clone(), stem_out, blocks: caches }))
    }

    /// Accumulates parameter gradients given the gradient of the feature map.
    pub fn backward(&mut self, cache: &BackboneCache<T>, grad_out: &Tensor<T>) -> Result<()> {
        let mut g = grad_out.clone();
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = b.backward(c, &g)?;
        }
        let gstem = relu_backward(&cache.stem_out, &g);
        // Input gradient is not needed.
        self.stem.backward(&cache.input, &gstem)?;
        Ok(())
    }

    /// Parameters in checkpoint order: stem weight and bias, then per block
    /// conv1, conv2 and (when present) the projection shortcut.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = vec![&self.stem.weight, &self.stem.bias];
        for b in &self.blocks {
            p.extend(b.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = vec![&mut self.stem.weight, &mut self.stem.bias];
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p
    }
}

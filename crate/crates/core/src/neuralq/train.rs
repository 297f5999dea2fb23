//! Minibatch training with Adam and decoupled weight decay, and evaluation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{image_tensor, ModelConfig, QualityModel, Targets};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imgcore::{ImageBuf, Rect};
use crate::psychlab::{lcc, srcc};
use crate::rng::{derive_seed, substream};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub pad_side: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 120,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            lr_backbone: 3e-4,
            lr_head: 3e-3,
            pad_side: 640,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Smaller canvas and batch for CPU-sized runs; optimizer settings kept.
    pub fn desk() -> Self {
        TrainConfig { pad_side: 160, batch_size: 16, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 || self.pad_side == 0 {
            return bad("batch_size, epochs and pad_side must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(self.lr_backbone >= 0.0 && self.lr_head >= 0.0 && self.lr_backbone.is_finite() && self.lr_head.is_finite()) {
            return bad("learning rates must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite() && self.adam_eps > 0.0) {
            return bad("weight_decay must be non-negative and adam_eps positive");
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay over a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: &TrainConfig, params: &[&Tensor<T>]) -> Self {
        Adam {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }

    /// One update; `lrs[i]` is the learning rate of `params[i]`.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, lrs: &[f64]) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(self.step));
        let c2 = T::one() - T::lit(self.beta2.powi(self.step));
        let (eps, wd) = (T::lit(self.eps), T::lit(self.weight_decay));
        for (i, p) in params.into_iter().enumerate() {
            let lr = T::lit(lrs[i]);
            let (vals, grad) = p.split_mut();
            let Some(grad) = grad else { continue };
            for j in 0..vals.len() {
                let g = grad[j];
                self.m[i][j] = b1 * self.m[i][j] + (T::one() - b1) * g;
                self.v[i][j] = b2 * self.v[i][j] + (T::one() - b2) * g * g;
                let mh = self.m[i][j] / c1;
                let vh = self.v[i][j] / c2;
                vals[j] = vals[j] - lr * (mh / (vh.sqrt() + eps) + wd * vals[j]);
            }
        }
    }
}

/// One training picture, already padded, with patch rects in its coordinates.
#[derive(Clone, Debug)]
pub struct TrainSample<T> {
    pub image: ImageBuf<T>,
    pub patches: Vec<Rect>,
    pub mos: T,
    pub patch_mos: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    /// Minibatch MSE on the opinion scale.
    pub mse: f64,
}

fn validate_data<T: Real>(model: &QualityModel<T>, data: &[TrainSample<T>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let in_range = |v: T| v.is_finite() && v >= T::zero() && v <= T::lit(100.0);
    for (i, s) in data.iter().enumerate() {
        if !in_range(s.mos) || !s.patch_mos.iter().all(|&v| in_range(v)) {
            return Err(Error::Config(format!("sample {i}: targets must lie in [0, 100]")));
        }
        if model.kind().uses_patches() && (s.patches.len() != s.patch_mos.len() || s.patches.len() != model.config.patches) {
            return Err(Error::Config(format!(
                "sample {i}: expected {} patches with scores, got {} rects and {} scores",
                model.config.patches,
                s.patches.len(),
                s.patch_mos.len()
            )));
        }
    }
    Ok(())
}

/// Trains `model` in place and returns the per-step loss curve.
/// Deterministic given `cfg.seed` and the data order.
pub fn train_model<T: Real>(model: &mut QualityModel<T>, data: &[TrainSample<T>], cfg: &TrainConfig) -> Result<Vec<LossPoint>> {
    cfg.validate()?;
    validate_data(model, data)?;
    let inputs: Vec<Tensor<T>> = data.iter().map(|s| image_tensor(&s.image)).collect();
    let targets: Vec<Targets<T>> = data
        .iter()
        .map(|s| Targets { picture: s.mos, patches: s.patch_mos.clone() })
        .collect();
    let n_bb = model.backbone_param_count();
    let lrs: Vec<f64> = (0..model.params().len())
        .map(|i| if i < n_bb { cfg.lr_backbone } else { cfg.lr_head })
        .collect();
    let mut adam = Adam::new(cfg, &model.params());
    let scale2 = model.config.score_scale * model.config.score_scale;
    let mut curve = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut substream(cfg.seed, 1 + epoch as u64));
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let w = T::one() / T::from_usize_lossy(batch.len());
            let mut loss = T::zero();
            for &i in batch {
                let rois = if model.kind().uses_patches() { &data[i].patches[..] } else { &[] };
                loss = loss + model.sample_loss_backward(&inputs[i], rois, &targets[i], w)? * w;
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at step {}", curve.len())));
            }
            adam.step(model.params_mut(), &lrs);
            curve.push(LossPoint { step: curve.len(), epoch, mse: loss.as_f64() * scale2 });
        }
    }
    Ok(curve)
}

/// Initializes a model from `cfg.seed` and trains it.
pub fn train<T: Real>(config: &ModelConfig, data: &[TrainSample<T>], cfg: &TrainConfig) -> Result<(QualityModel<T>, Vec<LossPoint>)> {
    let mut model = QualityModel::new(config, &mut substream(derive_seed(cfg.seed, 0), 0))?;
    let curve = train_model(&mut model, data, cfg)?;
    Ok((model, curve))
}

/// Mean training loss over the whole set, on the opinion scale.
pub fn dataset_mse<T: Real>(model: &QualityModel<T>, data: &[TrainSample<T>]) -> Result<f64> {
    validate_data(model, data)?;
    let mut total = 0.0;
    for s in data {
        let rois = if model.kind().uses_patches() { &s.patches[..] } else { &[] };
        let t = Targets { picture: s.mos, patches: s.patch_mos.clone() };
        total += model.sample_loss(&image_tensor(&s.image), rois, &t)?.as_f64();
    }
    Ok(total / data.len() as f64 * model.config.score_scale * model.config.score_scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub srcc: f64,
    pub lcc: f64,
    pub predictions: Vec<f64>,
}

/// Correlation of predictions with MOS over `(picture, mos)` pairs.
/// Correlations are undefined (metric error) for fewer than three items or
/// constant predictions.
pub fn evaluate_predictions(predictions: &[f64], mos: &[f64]) -> Result<Evaluation> {
    Ok(Evaluation {
        srcc: srcc(predictions, mos)?,
        lcc: lcc(predictions, mos)?,
        predictions: predictions.to_vec(),
    })
}

pub fn evaluate<T: Real>(model: &QualityModel<T>, items: &[(ImageBuf<T>, T)], pad_side: usize) -> Result<Evaluation> {
    if items.len() < 3 {
        return Err(Error::Metric(format!("need at least 3 items, got {}", items.len())));
    }
    let mut preds = Vec::with_capacity(items.len());
    for (img, _) in items {
        preds.push(model.predict(img, pad_side, None)?.picture.as_f64());
    }
    let mos: Vec<f64> = items.iter().map(|(_, m)| m.as_f64()).collect();
    evaluate_predictions(&preds, &mos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralq::model::ModelKind;
    use rand::Rng as _;

    fn sample(seed: u64, side: usize) -> TrainSample<f64> {
        let mut rng = crate::rng::seeded(seed);
        let level: f64 = rng.random_range(0.1..0.9);
        let image = ImageBuf::from_fn(side, side, 3, |_, _, _| level + rng.random_range(-0.1..0.1)).unwrap();
        let patches = vec![
            Rect::new(0, 0, 8, 8).unwrap(),
            Rect::new(4, 6, 12, 14).unwrap(),
            Rect::new(8, 2, 16, 10).unwrap(),
        ];
        TrainSample { image, patches, mos: level * 100.0, patch_mos: vec![level * 90.0, level * 100.0, level * 95.0] }
    }

    #[test]
    fn default_hyperparameters_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.epochs, c.pad_side), (120, 10, 640));
        assert_eq!((c.beta1, c.beta2, c.weight_decay, c.lr_backbone, c.lr_head), (0.9, 0.99, 0.01, 3e-4, 3e-3));
        assert_eq!(TrainConfig::desk().pad_side, 160);
        assert!(TrainConfig { beta2: 1.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { lr_head: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let cfg = TrainConfig { batch_size: 2, epochs: 1, lr_backbone: 0.0, lr_head: 0.0, pad_side: 16, ..Default::default() };
        let data: Vec<_> = (0..3).map(|i| sample(i, 16)).collect();
        let mc = ModelConfig::toy(ModelKind::Feedback);
        let mut m = QualityModel::<f64>::seeded(&mc, 3).unwrap();
        let before = m.clone();
        train_model(&mut m, &data, &cfg).unwrap();
        for (a, b) in m.params().iter().zip(before.params()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn training_is_reproducible_and_checks_data() {
        let cfg = TrainConfig { batch_size: 2, epochs: 2, pad_side: 16, seed: 11, ..Default::default() };
        let data: Vec<_> = (0..4).map(|i| sample(i, 16)).collect();
        let mc = ModelConfig::toy(ModelKind::RoiPool);
        let (_, a) = train(&mc, &data, &cfg).unwrap();
        let (_, b) = train(&mc, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(matches!(train::<f64>(&mc, &[], &cfg), Err(Error::Config(_))));
        let mut bad = data.clone();
        bad[1].mos = 120.0;
        assert!(matches!(train(&mc, &bad, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn single_sample_loss_decreases() {
        let cfg = TrainConfig { batch_size: 1, epochs: 50, lr_backbone: 1e-4, lr_head: 1e-3, pad_side: 16, ..Default::default() };
        let data = vec![sample(5, 16)];
        let (_, curve) = train(&ModelConfig::toy(ModelKind::Feedback), &data, &cfg).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].mse <= w[0].mse + 1e-9, "{} -> {}", w[0].mse, w[1].mse);
        }
    }

    #[test]
    fn evaluation_metrics() {
        let t: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let e = evaluate_predictions(&t, &t).unwrap();
        assert_eq!((e.srcc, e.lcc), (1.0, 1.0));
        assert!(matches!(evaluate_predictions(&[5.0; 10], &t), Err(Error::Metric(_))));
        let mut rng = crate::rng::seeded(1);
        let t: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..100.0)).collect();
        let p: Vec<f64> = t.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
        let e = evaluate_predictions(&p, &t).unwrap();
        assert!(e.srcc >= 0.9 && e.srcc <= 1.0);
    }
}

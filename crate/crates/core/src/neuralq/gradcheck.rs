//! Central finite-difference verification of analytic gradients.

use super::layers::Linear;
use super::model::{ModelConfig, ModelKind, QualityModel, Targets};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imgcore::Rect;
use crate::rng::{substream, Rng};
use crate::scalar::Real;
use rand::Rng as _;

/// A scalar objective of a set of parameter tensors.
pub trait Differentiable<T> {
    fn loss(&self) -> Result<T>;
    /// Returns the loss and leaves exactly its gradient in the parameter
    /// gradient buffers.
    fn loss_and_grad(&mut self) -> Result<T>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

/// Max over parameters of `|a - n| / max(|a|, |n|, 1e-8)` where `a` is the
/// analytic and `n` the central-difference derivative.
pub fn grad_check<T: Real, D: Differentiable<T>>(f: &mut D, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    f.loss_and_grad()?;
    let analytic: Vec<Vec<f64>> = f
        .params_mut()
        .iter()
        .map(|p| p.grad().map(|g| g.iter().map(|v| v.as_f64()).collect()).unwrap_or_default())
        .collect();
    if analytic.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite analytic gradient".into()));
    }
    let e = T::lit(eps);
    let mut worst = 0.0f64;
    for (i, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = f.params_mut()[i].values()[j];
            f.params_mut()[i].values_mut()[j] = orig + e;
            let up = f.loss()?;
            f.params_mut()[i].values_mut()[j] = orig - e;
            let down = f.loss()?;
            f.params_mut()[i].values_mut()[j] = orig;
            let n = (up - down).as_f64() / (2.0 * eps);
            if !n.is_finite() {
                return Err(Error::Numeric("non-finite numeric gradient".into()));
            }
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

/// Loss of a quality model on a fixed set of prepared inputs.
pub struct ModelObjective<T> {
    pub model: QualityModel<T>,
    pub samples: Vec<(Tensor<T>, Vec<Rect>, Targets<T>)>,
}

impl<T: Real> Differentiable<T> for ModelObjective<T> {
    fn loss(&self) -> Result<T> {
        let mut total = T::zero();
        for (x, r, t) in &self.samples {
            total = total + self.model.sample_loss(x, r, t)?;
        }
        Ok(total / T::from_usize_lossy(self.samples.len()))
    }

    fn loss_and_grad(&mut self) -> Result<T> {
        self.model.zero_grad();
        let w = T::one() / T::from_usize_lossy(self.samples.len());
        let mut total = T::zero();
        for (x, r, t) in &self.samples {
            total = total + self.model.sample_loss_backward(x, r, t, w)? * w;
        }
        Ok(total)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.model.params_mut()
    }
}

/// `sum(c · (W x + b))`: linear in every parameter.
pub struct LinearObjective<T> {
    pub layer: Linear<T>,
    pub input: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> LinearObjective<T> {
    pub fn random(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let mut draw = |n: usize| (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect::<Vec<T>>();
        let input = draw(inputs);
        let weights = draw(outputs);
        LinearObjective { layer: Linear::new(inputs, outputs, 1.0, rng), input, weights }
    }
}

impl<T: Real> Differentiable<T> for LinearObjective<T> {
    fn loss(&self) -> Result<T> {
        let y = self.layer.forward(&self.input)?;
        Ok(y.iter().zip(&self.weights).map(|(&a, &b)| a * b).sum())
    }

    fn loss_and_grad(&mut self) -> Result<T> {
        self.layer.weight.zero_grad();
        self.layer.bias.zero_grad();
        let loss = self.loss()?;
        self.layer.backward(&self.input, &self.weights)?;
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.layer.weight, &mut self.layer.bias]
    }
}

/// Toy model of `kind` with two random 16×16 inputs, three patch regions and
/// random targets.
pub fn toy_objective(kind: ModelKind, seed: u64) -> Result<ModelObjective<f64>> {
    let model = QualityModel::new(&ModelConfig::toy(kind), &mut substream(seed, 0))?;
    let mut rng = substream(seed, 1);
    let rois = vec![Rect::new(0, 0, 7, 7)?, Rect::new(5, 4, 15, 12)?, Rect::new(9, 10, 14, 16)?];
    let samples = (0..2)
        .map(|_| {
            let x = Tensor::randn(&[3, 16, 16], 1.0, &mut rng);
            let t = Targets {
                picture: rng.random_range(0.0..100.0),
                patches: (0..3).map(|_| rng.random_range(0.0..100.0)).collect(),
            };
            (x, rois.clone(), t)
        })
        .collect();
    Ok(ModelObjective { model, samples })
}

/// Gradient check of a toy model of `kind`.
pub fn grad_check_kind(kind: ModelKind, eps: f64, seed: u64) -> Result<f64> {
    grad_check(&mut toy_objective(kind, seed)?, eps)
}

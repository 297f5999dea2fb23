//! JSON checkpoints: model and training configuration plus every parameter
//! tensor, in the order of [`QualityModel::params`], as
//! `{name, shape, values}` records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, QualityModel};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::SCHEMA_VERSION;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &QualityModel<T>, train: &TrainConfig) -> Self {
        let params = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, t)| ParamRecord {
                name,
                shape: t.shape().to_vec(),
                values: t.values().iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Checkpoint { schema_version: SCHEMA_VERSION, seed: train.seed, model: model.config.clone(), train: train.clone(), params }
    }

    /// Rebuilds the model; any difference between the stored tensors and the
    /// layout implied by the stored configuration is a version error.
    pub fn to_model<T: Real>(&self) -> Result<QualityModel<T>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Version(format!(
                "checkpoint schema {} but this build reads {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let mut model = QualityModel::<T>::seeded(&self.model, 0)?;
        let names = model.param_names();
        if names.len() != self.params.len() {
            return Err(Error::Version(format!(
                "configuration implies {} tensors, checkpoint holds {}",
                names.len(),
                self.params.len()
            )));
        }
        for ((name, t), rec) in names.iter().zip(model.params_mut()).zip(&self.params) {
            if *name != rec.name || t.shape() != rec.shape.as_slice() || rec.values.len() != t.numel() {
                return Err(Error::Version(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    rec.name,
                    rec.shape,
                    t.shape()
                )));
            }
            for (dst, &v) in t.values_mut().iter_mut().zip(&rec.values) {
                *dst = T::lit(v);
            }
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("schema_version").and_then(|x| x.as_u64()) {
            Some(n) if n == u64::from(SCHEMA_VERSION) => Ok(serde_json::from_value(v)?),
            Some(n) => Err(Error::Version(format!("checkpoint schema {n} but this build reads {SCHEMA_VERSION}"))),
            None => Err(Error::Version("checkpoint has no schema_version".into())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Loss curve as CSV with a `# schema_version=..,seed=..` comment line.
pub fn write_loss_curve(out: impl std::io::Write, curve: &[super::train::LossPoint], seed: u64) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema_version={SCHEMA_VERSION},seed={seed}")?;
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p).map_err(crate::ugcfeat::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralq::model::ModelKind;
    use crate::neuralq::tensor::Tensor;

    #[test]
    fn roundtrip_preserves_predictions() {
        let m = QualityModel::<f64>::seeded(&ModelConfig::toy(ModelKind::Feedback), 3).unwrap();
        let ck = Checkpoint::from_model(&m, &TrainConfig { seed: 9, ..Default::default() });
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let m2: QualityModel<f64> = back.to_model().unwrap();
        assert_eq!(m2.params().iter().map(|t| t.values().to_vec()).collect::<Vec<_>>(),
                   m.params().iter().map(|t| t.values().to_vec()).collect::<Vec<_>>());
        let x = Tensor::randn(&[3, 16, 16], 1.0, &mut crate::rng::seeded(1));
        let r = crate::neuralq::model::default_rois(crate::Rect::full(16, 16), 3).unwrap();
        assert_eq!(m.forward(&x, &r).unwrap(), m2.forward(&x, &r).unwrap());
    }

    #[test]
    fn mismatches_are_version_errors() {
        let m = QualityModel::<f64>::seeded(&ModelConfig::toy(ModelKind::RoiPool), 3).unwrap();
        let mut ck = Checkpoint::from_model(&m, &TrainConfig::default());
        ck.model.head_hidden = 9;
        assert!(matches!(ck.to_model::<f64>(), Err(Error::Version(_))));
        let mut ck = Checkpoint::from_model(&m, &TrainConfig::default());
        ck.schema_version = 99;
        assert!(matches!(Checkpoint::from_json(&ck.to_json().unwrap()), Err(Error::Version(_))));
    }
}

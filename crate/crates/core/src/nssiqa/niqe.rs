use serde::{Deserialize, Serialize};

use super::{mscn, nss_features, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::imgcore::{crop, to_luma, ImageBuf, Rect};
use crate::linalg::{mean_and_covariance, symmetric_pinv, Matrix};
use crate::scalar::Real;

pub const NIQE_PATCH: usize = 96;
pub const SHARPNESS_PERCENTILE: f64 = 0.75;
pub const MIN_CORPUS: usize = 10;

/// Multivariate Gaussian over patch features of a pristine corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct NiqeModel<T> {
    pub patch_size: usize,
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

#[derive(Serialize, Deserialize)]
struct NiqeFile {
    schema_version: u32,
    patch_size: usize,
    mean: Vec<f64>,
    /// Row-major 36x36.
    covariance: Vec<f64>,
}

impl<T: Real> NiqeModel<T> {
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FEATURE_LEN || self.covariance.n != FEATURE_LEN {
            return Err(Error::Shape("NIQE model must be 36-dimensional".into()));
        }
        if self.covariance.max_asymmetry().as_f64() > 1e-9 {
            return Err(Error::Validation("NIQE covariance is not symmetric".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let f = NiqeFile {
            schema_version: crate::SCHEMA_VERSION,
            patch_size: self.patch_size,
            mean: self.mean.iter().map(|v| v.as_f64()).collect(),
            covariance: self.covariance.data.iter().map(|v| v.as_f64()).collect(),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: NiqeFile = serde_json::from_str(text)?;
        if f.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::Version(format!("NIQE model schema {}", f.schema_version)));
        }
        let model = NiqeModel {
            patch_size: f.patch_size,
            mean: f.mean.into_iter().map(T::lit).collect(),
            covariance: Matrix::from_rows(FEATURE_LEN, f.covariance.into_iter().map(T::lit).collect())?,
        };
        model.validate()?;
        Ok(model)
    }
}

struct PatchStat<T> {
    sharpness: f64,
    features: Vec<T>,
}

/// Non-overlapping `p x p` tiles from the top-left corner, with the mean
/// MSCN local deviation of each tile as its sharpness.
fn tile_stats<T: Real>(img: &ImageBuf<T>, p: usize) -> Result<Vec<PatchStat<T>>> {
    let luma = to_luma(img);
    if luma.width() < p || luma.height() < p {
        return Err(Error::Size(format!("image {}x{} smaller than {p}x{p} patch", luma.width(), luma.height())));
    }
    let field = mscn(&luma)?;
    let mut out = Vec::new();
    for ty in 0..luma.height() / p {
        for tx in 0..luma.width() / p {
            let rect = Rect::from_origin(tx * p, ty * p, p, p)?;
            let mut sharp = 0.0;
            for y in rect.top..rect.bottom {
                for x in rect.left..rect.right {
                    sharp += field.local_sigma[y * field.width + x].as_f64();
                }
            }
            sharp /= (p * p) as f64;
            // Flat tiles have no NSS statistics to fit.
            match nss_features(&crop(&luma, rect)?) {
                Ok(f) => out.push(PatchStat { sharpness: sharp, features: f.values.to_vec() }),
                Err(Error::Degenerate(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Feature vectors of every usable `p x p` tile of the image.
pub fn patch_features<T: Real>(img: &ImageBuf<T>, p: usize) -> Result<Vec<Vec<T>>> {
    Ok(tile_stats(img, p)?.into_iter().map(|s| s.features).collect())
}

/// Fits the pristine model from tiles whose sharpness is at or above the
/// corpus-wide 75th percentile (nearest rank).
pub fn niqe_fit<T: Real>(corpus: &[ImageBuf<T>], patch_size: usize) -> Result<NiqeModel<T>> {
    if corpus.len() < MIN_CORPUS {
        return Err(Error::Corpus(format!("need at least {MIN_CORPUS} images, got {}", corpus.len())));
    }
    let mut stats = Vec::new();
    for img in corpus {
        stats.extend(tile_stats(img, patch_size)?);
    }
    let mut sharp: Vec<f64> = stats.iter().map(|s| s.sharpness).filter(|s| *s > 0.0).collect();
    if sharp.is_empty() {
        return Err(Error::Corpus("no textured patches in corpus".into()));
    }
    sharp.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((SHARPNESS_PERCENTILE * sharp.len() as f64).ceil() as usize).clamp(1, sharp.len());
    let threshold = sharp[rank - 1];
    let kept: Vec<Vec<T>> = stats
        .into_iter()
        .filter(|s| s.sharpness > 0.0 && s.sharpness >= threshold)
        .map(|s| s.features)
        .collect();
    if kept.is_empty() {
        return Err(Error::Corpus("no patch passed sharpness selection".into()));
    }
    let (mean, covariance) = mean_and_covariance(&kept)?;
    Ok(NiqeModel { patch_size, mean, covariance })
}

/// Gaussian distance between the image's tile statistics and the model;
/// larger means further from pristine.
pub fn niqe_score<T: Real>(img: &ImageBuf<T>, model: &NiqeModel<T>) -> Result<T> {
    model.validate()?;
    let feats = patch_features(img, model.patch_size)?;
    if feats.is_empty() {
        return Err(Error::Numeric("image has no textured patch".into()));
    }
    let (mean, cov) = mean_and_covariance(&feats)?;
    let n = FEATURE_LEN;
    let mut pooled = Matrix::zeros(n);
    for i in 0..n * n {
        pooled.data[i] = (cov.data[i] + model.covariance.data[i]) * T::lit(0.5);
    }
    let inv = symmetric_pinv(&pooled);
    let delta: Vec<T> = mean.iter().zip(&model.mean).map(|(a, b)| *a - *b).collect();
    let q: T = inv.mul_vec(&delta).iter().zip(&delta).map(|(a, b)| *a * *b).sum();
    let d = q.max(T::zero()).sqrt();
    if !d.is_finite() {
        return Err(Error::Numeric(format!("non-finite NIQE distance {d}")));
    }
    Ok(d)
}

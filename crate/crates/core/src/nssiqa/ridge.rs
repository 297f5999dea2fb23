use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};
use crate::scalar::Real;

/// Ridge regression on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel<T> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub lambda: T,
}

/// Closed-form ridge fit: standardize each feature (population std; constant
/// features keep scale 1), then solve `(ZᵀZ + λI) w = Zᵀ(y - ȳ)`.
pub fn train_regressor<T: Real, F: AsRef<[T]>>(features: &[F], mos: &[T], ridge_lambda: T) -> Result<RidgeModel<T>> {
    if features.len() != mos.len() {
        return Err(Error::Shape(format!("{} rows vs {} targets", features.len(), mos.len())));
    }
    let d = features.first().map(|f| f.as_ref().len()).unwrap_or(0);
    if d == 0 || features.iter().any(|f| f.as_ref().len() != d) {
        return Err(Error::Shape("empty or ragged feature rows".into()));
    }
    if features.len() < d + 1 {
        return Err(Error::Size(format!("{} rows for {d} features; need at least {}", features.len(), d + 1)));
    }
    if !(ridge_lambda >= T::zero()) {
        return Err(Error::Validation(format!("ridge lambda {ridge_lambda} must be nonnegative")));
    }
    let n = T::from_usize_lossy(features.len());
    let mut means = vec![T::zero(); d];
    for f in features {
        for (m, &v) in means.iter_mut().zip(f.as_ref()) {
            *m = *m + v;
        }
    }
    means.iter_mut().for_each(|m| *m = *m / n);
    let mut scales = vec![T::zero(); d];
    for f in features {
        for j in 0..d {
            let c = f.as_ref()[j] - means[j];
            scales[j] = scales[j] + c * c;
        }
    }
    for s in &mut scales {
        let sd = (*s / n).sqrt();
        *s = if sd > T::zero() { sd } else { T::one() };
    }
    let y_mean = mos.iter().copied().sum::<T>() / n;
    let z: Vec<Vec<T>> = features
        .iter()
        .map(|f| (0..d).map(|j| (f.as_ref()[j] - means[j]) / scales[j]).collect())
        .collect();
    let mut a = Matrix::zeros(d);
    let mut b = vec![T::zero(); d];
    for (row, &y) in z.iter().zip(mos) {
        let yc = y - y_mean;
        for i in 0..d {
            b[i] = b[i] + row[i] * yc;
            for j in 0..=i {
                a[(i, j)] = a[(i, j)] + row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
        a[(i, i)] = a[(i, i)] + ridge_lambda;
    }
    let weights = solve(&a, &b)?;
    Ok(RidgeModel { means, scales, weights, intercept: y_mean, lambda: ridge_lambda })
}

pub fn predict_regressor<T: Real>(model: &RidgeModel<T>, features: &[T]) -> Result<T> {
    if features.len() != model.weights.len() {
        return Err(Error::Shape(format!("{} features for a {}-feature model", features.len(), model.weights.len())));
    }
    Ok(model.intercept
        + (0..features.len())
            .map(|j| model.weights[j] * (features[j] - model.means[j]) / model.scales[j])
            .sum::<T>())
}

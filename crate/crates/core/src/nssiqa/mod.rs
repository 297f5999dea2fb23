//! Natural scene statistics baselines: BRISQUE-style features, a ridge
//! regressor on top of them, and the training-free NIQE distance.
//!
//! Feature layout (36 values): for the full-resolution luma and then for the
//! 2x box-downsampled luma, 18 values each:
//!
//! | offset | values                                         |
//! |--------|------------------------------------------------|
//! | 0..2   | GGD `alpha`, `sigma²` of the MSCN coefficients  |
//! | 2..6   | AGGD of horizontal neighbour products           |
//! | 6..10  | AGGD of vertical neighbour products             |
//! | 10..14 | AGGD of main-diagonal neighbour products        |
//! | 14..18 | AGGD of anti-diagonal neighbour products        |
//!
//! Each AGGD group is `(alpha, mean, sigma_l², sigma_r²)`.

mod fit;
mod niqe;
mod ridge;

use crate::error::{Error, Result};
use crate::imgcore::{to_luma, ImageBuf};
use crate::scalar::Real;

pub use fit::{aggd_fit, gamma, ggd_fit, ln_gamma, AggdParams, GgdParams, ALPHA_MAX, ALPHA_MIN};
pub use niqe::{niqe_fit, niqe_score, patch_features, NiqeModel, NIQE_PATCH, SHARPNESS_PERCENTILE};
pub use ridge::{predict_regressor, train_regressor, RidgeModel};

pub const FEATURE_LEN: usize = 36;
pub const MSCN_WINDOW: usize = 7;
pub const MSCN_SIGMA: f64 = 7.0 / 6.0;
pub const MSCN_C: f64 = 1.0;
pub const MIN_MSCN_SIDE: usize = 16;
pub const MIN_FEATURE_SIDE: usize = 32;

/// Neighbour offsets `(dy, dx)` for the pairwise products, in feature order.
pub const PRODUCT_SHIFTS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

#[derive(Clone, Debug, PartialEq)]
pub struct NssFeatures<T> {
    pub values: [T; FEATURE_LEN],
}

impl<T: Real> NssFeatures<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }
}

impl<T> AsRef<[T]> for NssFeatures<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

/// Mean-subtracted contrast-normalized coefficients plus the local
/// deviation field they were normalized by.
#[derive(Clone, Debug, PartialEq)]
pub struct Mscn<T> {
    pub width: usize,
    pub height: usize,
    pub coefficients: Vec<T>,
    pub local_sigma: Vec<T>,
}

impl<T: Real> Mscn<T> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.coefficients[y * self.width + x]
    }
}

/// Unit-sum 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; MSCN_WINDOW] {
    let r = (MSCN_WINDOW / 2) as isize;
    let mut taps = [0.0; MSCN_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as isize - r;
        *t = (-(d * d) as f64 / (2.0 * MSCN_SIGMA * MSCN_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Symmetric extension: `... c b a | a b c ...`.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn blur_separable(src: &[f64], w: usize, h: usize, taps: &[f64; MSCN_WINDOW]) -> Vec<f64> {
    let r = (MSCN_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * src[y * w + reflect(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp[reflect(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// MSCN on the 0-255 scale with a 7x7 Gaussian window (sigma 7/6) and
/// stabilizing constant 1.
pub fn mscn<T: Real>(img: &ImageBuf<T>) -> Result<Mscn<T>> {
    let luma = to_luma(img);
    let (w, h) = (luma.width(), luma.height());
    if w < MIN_MSCN_SIDE || h < MIN_MSCN_SIDE {
        return Err(Error::Size(format!("MSCN needs at least {MIN_MSCN_SIDE}x{MIN_MSCN_SIDE}, got {w}x{h}")));
    }
    let px: Vec<f64> = luma.samples().iter().map(|s| s.as_f64() * 255.0).collect();
    let sq: Vec<f64> = px.iter().map(|v| v * v).collect();
    let taps = gaussian_taps();
    let mu = blur_separable(&px, w, h, &taps);
    let mu2 = blur_separable(&sq, w, h, &taps);
    let mut coefficients = Vec::with_capacity(w * h);
    let mut local_sigma = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let sigma = (mu2[i] - mu[i] * mu[i]).abs().sqrt();
        coefficients.push(T::lit((px[i] - mu[i]) / (sigma + MSCN_C)));
        local_sigma.push(T::lit(sigma));
    }
    Ok(Mscn { width: w, height: h, coefficients, local_sigma })
}

/// Products of each coefficient with its neighbour at `(dy, dx)`, over all
/// positions where the neighbour exists.
pub fn neighbour_products<T: Real>(m: &Mscn<T>, (dy, dx): (isize, isize)) -> Vec<T> {
    let mut out = Vec::with_capacity(m.width * m.height);
    for y in 0..m.height {
        let ny = y as isize + dy;
        if ny < 0 || ny >= m.height as isize {
            continue;
        }
        for x in 0..m.width {
            let nx = x as isize + dx;
            if nx < 0 || nx >= m.width as isize {
                continue;
            }
            out.push(m.at(x, y) * m.at(nx as usize, ny as usize));
        }
    }
    out
}

/// 2x box downsample (floor of each dimension).
pub fn downsample2<T: Real>(luma: &ImageBuf<T>) -> Result<ImageBuf<T>> {
    let (w, h) = (luma.width() / 2, luma.height() / 2);
    let quarter = T::lit(0.25);
    ImageBuf::from_fn(w, h, 1, |x, y, _| {
        (luma.get(2 * x, 2 * y, 0)
            + luma.get(2 * x + 1, 2 * y, 0)
            + luma.get(2 * x, 2 * y + 1, 0)
            + luma.get(2 * x + 1, 2 * y + 1, 0))
            * quarter
    })
}

fn scale_features<T: Real>(luma: &ImageBuf<T>, out: &mut Vec<T>) -> Result<()> {
    let m = mscn(luma)?;
    let g = ggd_fit(&m.coefficients)?;
    out.extend([g.alpha, g.sigma_sq]);
    for shift in PRODUCT_SHIFTS {
        let a = aggd_fit(&neighbour_products(&m, shift))?;
        out.extend([a.alpha, a.mean, a.sigma_l_sq, a.sigma_r_sq]);
    }
    Ok(())
}

/// The 36 BRISQUE-style features in the documented order.
pub fn nss_features<T: Real>(img: &ImageBuf<T>) -> Result<NssFeatures<T>> {
    let luma = to_luma(img);
    if luma.width() < MIN_FEATURE_SIDE || luma.height() < MIN_FEATURE_SIDE {
        return Err(Error::Size(format!(
            "NSS features need at least {MIN_FEATURE_SIDE}x{MIN_FEATURE_SIDE}, got {}x{}",
            luma.width(),
            luma.height()
        )));
    }
    let mut values = Vec::with_capacity(FEATURE_LEN);
    scale_features(&luma, &mut values)?;
    scale_features(&downsample2(&luma)?, &mut values)?;
    Ok(NssFeatures { values: values.try_into().expect("36 features") })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::imgcore::ImageBuf;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Piecewise-smooth synthetic "photo": a smooth gradient with a few
    /// soft-edged discs and rectangles.
    pub fn natural(w: usize, h: usize, seed: u64) -> ImageBuf<f64> {
        let mut rng = crate::rng::seeded(seed);
        let base: f64 = rng.random_range(0.2..0.6);
        let (gx, gy): (f64, f64) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let shapes: Vec<(f64, f64, f64, f64, bool)> = (0..8)
            .map(|_| {
                (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(4.0..(w.min(h) as f64 / 3.0)),
                    rng.random_range(-0.35..0.35),
                    rng.random(),
                )
            })
            .collect();
        ImageBuf::from_fn(w, h, 1, |x, y, _| {
            let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
            let mut v = base + gx * fx + gy * fy + 0.03 * (fx * 17.0).sin() * (fy * 11.0).cos();
            for &(cx, cy, r, amp, disc) in &shapes {
                let d = if disc {
                    ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() - r
                } else {
                    (x as f64 - cx).abs().max((y as f64 - cy).abs()) - r
                };
                v += amp / (1.0 + (d / 0.8).exp());
            }
            v
        })
        .unwrap()
    }

    pub fn with_noise(img: &ImageBuf<f64>, sigma: f64, seed: u64) -> ImageBuf<f64> {
        let mut rng = crate::rng::seeded(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let samples = img.samples().iter().map(|s| (s + normal.sample(&mut rng)).clamp(0.0, 1.0)).collect();
        ImageBuf::new(img.width(), img.height(), img.channels(), samples).unwrap()
    }
}

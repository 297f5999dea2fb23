//! Moment-matching estimators for generalized Gaussian (GGD) and asymmetric
//! generalized Gaussian (AGGD) distributions.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const ALPHA_MIN: f64 = 0.2;
pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_STEP: f64 = 0.001;
pub const MIN_SAMPLES: usize = 100;

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// `Γ(1/α)Γ(3/α) / Γ(2/α)²` over the α grid, computed once.
fn ratio_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let steps = ((ALPHA_MAX - ALPHA_MIN) / ALPHA_STEP).round() as usize;
        (0..=steps)
            .map(|i| {
                let a = ALPHA_MIN + i as f64 * ALPHA_STEP;
                let r = (ln_gamma(1.0 / a) + ln_gamma(3.0 / a) - 2.0 * ln_gamma(2.0 / a)).exp();
                (a, r)
            })
            .collect()
    })
}

/// Grid α whose ratio `Γ(1/α)Γ(3/α)/Γ(2/α)²` is closest to `target`.
/// Ties resolve to the smaller α.
fn alpha_for_ratio(target: f64) -> f64 {
    let mut best = (f64::INFINITY, ALPHA_MIN);
    for &(a, r) in ratio_table() {
        let d = (r - target).abs();
        if d < best.0 {
            best = (d, a);
        }
    }
    best.1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GgdParams<T> {
    pub alpha: T,
    pub sigma_sq: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdParams<T> {
    pub alpha: T,
    pub mean: T,
    pub sigma_l_sq: T,
    pub sigma_r_sq: T,
}

/// Symmetric GGD fit: α matches `E[x²] / (E|x|)²`, σ² is the second moment.
pub fn ggd_fit<T: Real>(samples: &[T]) -> Result<GgdParams<T>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Size(format!("GGD fit needs {MIN_SAMPLES} samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for s in samples {
        let v = s.as_f64();
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    let (m1, m2) = (abs_sum / n, sq_sum / n);
    if !(m2 > 0.0) || samples.iter().all(|s| *s == samples[0]) {
        return Err(Error::Degenerate("GGD fit of zero-variance samples".into()));
    }
    Ok(GgdParams { alpha: T::lit(alpha_for_ratio(m2 / (m1 * m1))), sigma_sq: T::lit(m2) })
}

/// Asymmetric GGD fit from the one-sided second moments.
pub fn aggd_fit<T: Real>(samples: &[T]) -> Result<AggdParams<T>> {
    let (mut ls, mut ln, mut rs, mut rn) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for s in samples {
        let v = s.as_f64();
        if v < 0.0 {
            ls += v * v;
            ln += 1;
        } else if v > 0.0 {
            rs += v * v;
            rn += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if ln == 0 || rn == 0 {
        return Err(Error::Degenerate("AGGD fit needs samples on both sides of zero".into()));
    }
    let n = samples.len() as f64;
    let (sl, sr) = ((ls / ln as f64).sqrt(), (rs / rn as f64).sqrt());
    let gamma_hat = sl / sr;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let g2 = gamma_hat * gamma_hat;
    let big_r = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0) / ((g2 + 1.0) * (g2 + 1.0));
    // Γ(2/α)² / (Γ(1/α)Γ(3/α)) = big_r  <=>  ratio = 1 / big_r
    let alpha = alpha_for_ratio(1.0 / big_r);
    let (lg1, lg2, lg3) = (ln_gamma(1.0 / alpha), ln_gamma(2.0 / alpha), ln_gamma(3.0 / alpha));
    let mean = (sr - sl) * (lg2 - lg1).exp() * (0.5 * (lg1 - lg3)).exp();
    Ok(AggdParams {
        alpha: T::lit(alpha),
        mean: T::lit(mean),
        sigma_l_sq: T::lit(sl * sl),
        sigma_r_sq: T::lit(sr * sr),
    })
}

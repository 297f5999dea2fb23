//! Constrained random patch cropping: three patches per picture at 40%, 30%
//! and 20% of the linear dimensions, same aspect ratio as the parent, fully
//! contained, and no pair overlapping by more than a quarter of the smaller
//! patch.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Rect;
use crate::rng;

/// Linear patch scales in tenths, largest first.
pub const PATCH_SCALES_TENTHS: [usize; 3] = [4, 3, 2];
pub const PATCH_SCALES: [f64; 3] = [0.4, 0.3, 0.2];
pub const MAX_OVERLAP: f64 = 0.25;
pub const MAX_ATTEMPTS: usize = 10_000;
pub const MIN_PICTURE_SIDE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub parent_id: String,
    pub scale: f64,
    #[serde(flatten)]
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Containment { index: usize, rect: Rect },
    Dimension { index: usize, expected: (usize, usize), actual: (usize, usize) },
    UnknownScale { index: usize, scale: f64 },
    Overlap { first: usize, second: usize, fraction: f64 },
}

/// `round-half-up(tenths / 10 * dim)` in exact integer arithmetic.
fn scaled_dim(dim: usize, tenths: usize) -> usize {
    (tenths * dim + 5) / 10
}

fn tenths_of(scale: f64) -> Option<usize> {
    PATCH_SCALES
        .iter()
        .position(|&s| (s - scale).abs() < 1e-9)
        .map(|i| PATCH_SCALES_TENTHS[i])
}

/// Patch size for a given scale.
pub fn patch_dims(width: usize, height: usize, scale: f64) -> Result<(usize, usize)> {
    let t = tenths_of(scale).ok_or_else(|| Error::Validation(format!("unsupported patch scale {scale}")))?;
    Ok((scaled_dim(width, t), scaled_dim(height, t)))
}

/// `area(a ∩ b) / min(area(a), area(b))`.
pub fn overlap_fraction(a: &Rect, b: &Rect) -> f64 {
    let denom = a.area().min(b.area());
    if denom == 0 {
        return 0.0;
    }
    a.intersection_area(b) as f64 / denom as f64
}

pub fn propose_patches(width: usize, height: usize, seed: u64) -> Result<Vec<PatchSpec>> {
    propose_patches_for("", width, height, seed)
}

/// Rejection-samples top-left corners uniformly until the three patches
/// satisfy the overlap rule, for at most [`MAX_ATTEMPTS`] draws.
pub fn propose_patches_for(parent_id: &str, width: usize, height: usize, seed: u64) -> Result<Vec<PatchSpec>> {
    if width < MIN_PICTURE_SIDE || height < MIN_PICTURE_SIDE {
        return Err(Error::Size(format!(
            "picture {width}x{height} below {MIN_PICTURE_SIDE}x{MIN_PICTURE_SIDE}"
        )));
    }
    let sizes = PATCH_SCALES_TENTHS.map(|t| (scaled_dim(width, t), scaled_dim(height, t)));
    let mut rng = rng::seeded(seed);
    for _ in 0..MAX_ATTEMPTS {
        let rects: Vec<Rect> = sizes
            .iter()
            .map(|&(pw, ph)| {
                let left = rng.random_range(0..=width - pw);
                let top = rng.random_range(0..=height - ph);
                Rect { left, top, right: left + pw, bottom: top + ph }
            })
            .collect();
        let ok = (0..3).all(|i| (i + 1..3).all(|j| overlap_fraction(&rects[i], &rects[j]) <= MAX_OVERLAP));
        if ok {
            return Ok(rects
                .into_iter()
                .zip(PATCH_SCALES)
                .map(|(rect, scale)| PatchSpec { parent_id: parent_id.to_string(), scale, rect })
                .collect());
        }
    }
    Err(Error::Placement(format!(
        "no valid layout for {width}x{height} in {MAX_ATTEMPTS} attempts"
    )))
}

/// Every constraint violation of a patch set; empty when the set is valid.
pub fn validate_patchset(width: usize, height: usize, patches: &[PatchSpec]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, p) in patches.iter().enumerate() {
        if !p.rect.fits_in(width, height) {
            out.push(Violation::Containment { index, rect: p.rect });
        }
        match patch_dims(width, height, p.scale) {
            Ok(expected) => {
                let actual = (p.rect.width(), p.rect.height());
                if expected.0.abs_diff(actual.0) > 1 || expected.1.abs_diff(actual.1) > 1 {
                    out.push(Violation::Dimension { index, expected, actual });
                }
            }
            Err(_) => out.push(Violation::UnknownScale { index, scale: p.scale }),
        }
    }
    for i in 0..patches.len() {
        for j in i + 1..patches.len() {
            let fraction = overlap_fraction(&patches[i].rect, &patches[j].rect);
            if fraction > MAX_OVERLAP {
                out.push(Violation::Overlap { first: i, second: j, fraction });
            }
        }
    }
    out
}

//! Global and region pooling of `[C, h, w]` feature maps.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imgcore::Rect;
use crate::scalar::Real;

/// Side of the fixed RoI pooling grid.
pub const ROI_GRID: usize = 2;

fn map_dims<T: Real>(feat: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *feat.shape() {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok((c, h, w)),
        ref s => Err(Error::Shape(format!("expected a non-empty [C, h, w] map, got {s:?}"))),
    }
}

/// Pooled values plus the flat feature-map index each max came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled<T> {
    pub values: Vec<T>,
    pub argmax: Vec<usize>,
}

/// Channelwise means followed by channelwise maxima (length `2C`).
pub fn pool_global<T: Real>(feat: &Tensor<T>) -> Result<Pooled<T>> {
    let (c, h, w) = map_dims(feat)?;
    let n = h * w;
    let v = feat.values();
    let mut values = vec![T::zero(); 2 * c];
    let mut argmax = vec![0; c];
    for ch in 0..c {
        let plane = &v[ch * n..(ch + 1) * n];
        values[ch] = plane.iter().copied().sum::<T>() / T::from_usize_lossy(n);
        let mut best = 0;
        for (i, &x) in plane.iter().enumerate() {
            if x > plane[best] {
                best = i;
            }
        }
        values[c + ch] = plane[best];
        argmax[ch] = ch * n + best;
    }
    Ok(Pooled { values, argmax })
}

/// Gradient of [`pool_global`] with respect to its input map.
pub fn pool_global_backward<T: Real>(shape: &[usize], pooled: &Pooled<T>, grad: &[T]) -> Tensor<T> {
    let (c, n) = (shape[0], shape[1] * shape[2]);
    let mut g = Tensor::zeros(shape);
    let gv = g.values_mut();
    let inv = T::one() / T::from_usize_lossy(n);
    for ch in 0..c {
        let gm = grad[ch] * inv;
        gv[ch * n..(ch + 1) * n].iter_mut().for_each(|x| *x = gm);
        gv[pooled.argmax[ch]] = gv[pooled.argmax[ch]] + grad[c + ch];
    }
    g
}

/// Feature-map window `[x0, x1) × [y0, y1)` covered by an image-space rect.
pub fn roi_window(roi: Rect, image_w: usize, image_h: usize, map_w: usize, map_h: usize) -> Result<(usize, usize, usize, usize)> {
    roi.validate()?;
    if !roi.fits_in(image_w, image_h) {
        return Err(Error::Bounds(format!("roi {roi:?} outside {image_w}x{image_h} image")));
    }
    if map_w == 0 || map_h == 0 || image_w % map_w != 0 || image_h % map_h != 0 || image_w / map_w != image_h / map_h {
        return Err(Error::Shape(format!("{map_w}x{map_h} map does not evenly tile a {image_w}x{image_h} image")));
    }
    let d = image_w / map_w;
    let x0 = roi.left / d;
    let y0 = roi.top / d;
    let x1 = roi.right.div_ceil(d).min(map_w).max(x0 + 1);
    let y1 = roi.bottom.div_ceil(d).min(map_h).max(y0 + 1);
    Ok((x0, y0, x1, y1))
}

/// Cell `k` of an integer partition of `[start, end)` into [`ROI_GRID`]
/// parts, widened to one element when the window is narrower than the grid.
fn cell(start: usize, end: usize, k: usize) -> (usize, usize) {
    let e = end - start;
    let a = start + k * e / ROI_GRID;
    let b = (start + (k + 1) * e / ROI_GRID).max(a + 1);
    (a, b)
}

/// Max over each cell of the 2×2 grid laid over the roi's feature window.
/// Output is channel-major, cells row-major: length `4C`.
pub fn roi_pool<T: Real>(feat: &Tensor<T>, roi: Rect, image_dims: (usize, usize)) -> Result<Pooled<T>> {
    let (c, h, w) = map_dims(feat)?;
    let (x0, y0, x1, y1) = roi_window(roi, image_dims.0, image_dims.1, w, h)?;
    let v = feat.values();
    let cells = ROI_GRID * ROI_GRID;
    let mut values = Vec::with_capacity(c * cells);
    let mut argmax = Vec::with_capacity(c * cells);
    for ch in 0..c {
        for cy in 0..ROI_GRID {
            let (ya, yb) = cell(y0, y1, cy);
            for cx in 0..ROI_GRID {
                let (xa, xb) = cell(x0, x1, cx);
                let mut best = (ch * h + ya) * w + xa;
                for y in ya..yb {
                    for x in xa..xb {
                        let i = (ch * h + y) * w + x;
                        if v[i] > v[best] {
                            best = i;
                        }
                    }
                }
                values.push(v[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled { values, argmax })
}

/// Scatters gradients of pooled maxima back onto a map-shaped buffer.
pub fn max_backward_into<T: Real>(target: &mut [T], pooled_argmax: &[usize], grad: &[T]) {
    for (&i, &g) in pooled_argmax.iter().zip(grad) {
        target[i] = target[i] + g;
    }
}

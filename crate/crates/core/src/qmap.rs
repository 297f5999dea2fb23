//! Block quality maps: per-block shared-head scores over an `n × n` grid,
//! bilinear upsampling and magma overlays.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{ImageBuf, Rect};
use crate::neuralq::{image_tensor, prepare_picture, QualityModel};
use crate::scalar::Real;
use crate::SCHEMA_VERSION;

pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_ALPHA: f64 = 0.8;

/// `n × n` rects in row-major order with boundaries at `floor(k * dim / n)`.
pub fn grid_blocks(width: usize, height: usize, n: usize) -> Result<Vec<Rect>> {
    if n == 0 || width < n || height < n {
        return Err(Error::Size(format!("{width}x{height} picture cannot hold a {n}x{n} grid")));
    }
    let xs: Vec<usize> = (0..=n).map(|k| k * width / n).collect();
    let ys: Vec<usize> = (0..=n).map(|k| k * height / n).collect();
    let mut out = Vec::with_capacity(n * n);
    for gy in 0..n {
        for gx in 0..n {
            out.push(Rect::new(xs[gx], ys[gy], xs[gx + 1], ys[gy + 1])?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityMap<T> {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Row-major scores in `[0, 100]`.
    pub block_scores: Vec<T>,
    pub block_rects: Vec<Rect>,
}

impl<T: Real> QualityMap<T> {
    pub fn new(grid_w: usize, grid_h: usize, block_scores: Vec<T>, block_rects: Vec<Rect>) -> Result<Self> {
        if grid_w * grid_h != block_scores.len() || block_scores.len() != block_rects.len() || block_scores.is_empty() {
            return Err(Error::Shape(format!(
                "{grid_w}x{grid_h} grid with {} scores and {} rects",
                block_scores.len(),
                block_rects.len()
            )));
        }
        if block_scores.iter().any(|&s| !(s >= T::zero() && s <= T::lit(100.0))) {
            return Err(Error::Range("block scores must lie in [0, 100]".into()));
        }
        Ok(QualityMap { grid_w, grid_h, block_scores, block_rects })
    }

    /// Uniform map over the standard grid of a picture.
    pub fn uniform(width: usize, height: usize, n: usize, score: T) -> Result<Self> {
        let rects = grid_blocks(width, height, n)?;
        QualityMap::new(n, n, vec![score; rects.len()], rects)
    }

    pub fn score(&self, gx: usize, gy: usize) -> T {
        self.block_scores[gy * self.grid_w + gx]
    }

    fn centers(&self) -> (Vec<f64>, Vec<f64>) {
        let cx = (0..self.grid_w)
            .map(|gx| {
                let r = self.block_rects[gx];
                (r.left + r.right) as f64 / 2.0
            })
            .collect();
        let cy = (0..self.grid_h)
            .map(|gy| {
                let r = self.block_rects[gy * self.grid_w];
                (r.top + r.bottom) as f64 / 2.0
            })
            .collect();
        (cx, cy)
    }

    /// Bilinear interpolation of block scores at continuous picture
    /// coordinates, with block centers as sample points and edge clamping.
    pub fn sample(&self, x: f64, y: f64) -> T {
        let (cx, cy) = self.centers();
        self.sample_with(&cx, &cy, x, y)
    }

    fn sample_with(&self, cx: &[f64], cy: &[f64], x: f64, y: f64) -> T {
        let (i0, i1, tx) = bracket(cx, x);
        let (j0, j1, ty) = bracket(cy, y);
        let (tx, ty) = (T::lit(tx), T::lit(ty));
        let top = self.score(i0, j0) * (T::one() - tx) + self.score(i1, j0) * tx;
        let bottom = self.score(i0, j1) * (T::one() - tx) + self.score(i1, j1) * tx;
        top * (T::one() - ty) + bottom * ty
    }

    /// Full-resolution map sampled at pixel centers, row-major.
    pub fn upsample(&self, width: usize, height: usize) -> Vec<T> {
        let (cx, cy) = self.centers();
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                out.push(self.sample_with(&cx, &cy, x as f64 + 0.5, y as f64 + 0.5));
            }
        }
        out
    }

    /// Grid CSV: a `# schema_version=..` comment line, then one row of
    /// comma-separated scores per grid row.
    pub fn write_csv(&self, mut out: impl Write, seed: Option<u64>) -> Result<()> {
        match seed {
            Some(s) => writeln!(out, "# schema_version={SCHEMA_VERSION},seed={s}")?,
            None => writeln!(out, "# schema_version={SCHEMA_VERSION}")?,
        }
        for gy in 0..self.grid_h {
            let row: Vec<String> = (0..self.grid_w).map(|gx| format!("{}", self.score(gx, gy))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Indices of the sample points around `v` and the interpolation weight of
/// the second one.
fn bracket(points: &[f64], v: f64) -> (usize, usize, f64) {
    let last = points.len() - 1;
    if v <= points[0] {
        return (0, 0, 0.0);
    }
    if v >= points[last] {
        return (last, last, 0.0);
    }
    let k = points.partition_point(|&p| p <= v) - 1;
    (k, k + 1, (v - points[k]) / (points[k + 1] - points[k]))
}

/// Shared-head scores of every grid block, clamped to `[0, 100]`. The
/// picture is padded exactly as for whole-picture prediction.
pub fn predict_map<T: Real>(model: &QualityModel<T>, img: &ImageBuf<T>, n: usize, pad_side: usize) -> Result<QualityMap<T>> {
    if !model.kind().uses_patches() {
        return Err(Error::Capability("quality maps need a RoIPool or Feedback model".into()));
    }
    let rects = grid_blocks(img.width(), img.height(), n)?;
    let (padded, content) = prepare_picture(img, pad_side, model.downsampling())?;
    let shifted: Vec<Rect> = rects.iter().map(|r| r.translate(content.left, content.top)).collect();
    let scores = model
        .score_regions(&image_tensor(&padded), &shifted)?
        .into_iter()
        .map(|s| s.max(T::zero()).min(T::lit(100.0)))
        .collect();
    QualityMap::new(n, n, scores, rects)
}

/// Color of a score in `[0, 100]` from the 256-entry magma table.
pub fn magma<T: Real>(score: T) -> [T; 3] {
    let idx = ((score.as_f64() / 100.0 * 256.0).floor().max(0.0) as usize).min(255);
    MAGMA[idx].map(|c| T::lit(f64::from(c) / 255.0))
}

/// `alpha * colormap + (1 - alpha) * picture`, as an RGB picture.
pub fn render_map<T: Real>(img: &ImageBuf<T>, map: &QualityMap<T>, alpha: f64) -> Result<ImageBuf<T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Range(format!("alpha {alpha} outside [0, 1]")));
    }
    let (w, h) = (img.width(), img.height());
    let rgb = img.to_rgb();
    let up = map.upsample(w, h);
    let a = T::lit(alpha);
    let b = T::one() - a;
    let mut samples = rgb.samples().to_vec();
    for (i, &s) in up.iter().enumerate() {
        let color = magma(s);
        for (c, &col) in color.iter().enumerate() {
            let k = c * w * h + i;
            samples[k] = (a * col + b * samples[k]).max(T::zero()).min(T::one());
        }
    }
    ImageBuf::new(w, h, 3, samples)
}

/// Magma color table (256 sRGB triples, 0-255).
pub const MAGMA: [[u8; 3]; 256] = [
    [0, 0, 4],
    [1, 0, 5],
    [1, 1, 6],
    [1, 1, 8],
    [2, 1, 9],
    [2, 2, 11],
    [2, 2, 13],
    [3, 3, 15],
    [3, 3, 18],
    [4, 4, 20],
    [5, 4, 22],
    [6, 5, 24],
    [6, 5, 26],
    [7, 6, 28],
    [8, 7, 30],
    [9, 7, 32],
    [10, 8, 34],
    [11, 9, 36],
    [12, 9, 38],
    [13, 10, 41],
    [14, 11, 43],
    [16, 11, 45],
    [17, 12, 47],
    [18, 13, 49],
    [19, 13, 52],
    [20, 14, 54],
    [21, 14, 56],
    [22, 15, 59],
    [24, 15, 61],
    [25, 16, 63],
    [26, 16, 66],
    [28, 16, 68],
    [29, 17, 71],
    [30, 17, 73],
    [32, 17, 75],
    [33, 17, 78],
    [34, 17, 80],
    [36, 18, 83],
    [37, 18, 85],
    [39, 18, 88],
    [41, 17, 90],
    [42, 17, 92],
    [44, 17, 95],
    [45, 17, 97],
    [47, 17, 99],
    [49, 17, 101],
    [51, 16, 103],
    [52, 16, 105],
    [54, 16, 107],
    [56, 16, 108],
    [57, 15, 110],
    [59, 15, 112],
    [61, 15, 113],
    [63, 15, 114],
    [64, 15, 116],
    [66, 15, 117],
    [68, 15, 118],
    [69, 16, 119],
    [71, 16, 120],
    [73, 16, 120],
    [74, 16, 121],
    [76, 17, 122],
    [78, 17, 123],
    [79, 18, 123],
    [81, 18, 124],
    [82, 19, 124],
    [84, 19, 125],
    [86, 20, 125],
    [87, 21, 126],
    [89, 21, 126],
    [90, 22, 126],
    [92, 22, 127],
    [93, 23, 127],
    [95, 24, 127],
    [96, 24, 128],
    [98, 25, 128],
    [100, 26, 128],
    [101, 26, 128],
    [103, 27, 128],
    [104, 28, 129],
    [106, 28, 129],
    [107, 29, 129],
    [109, 29, 129],
    [110, 30, 129],
    [112, 31, 129],
    [114, 31, 129],
    [115, 32, 129],
    [117, 33, 129],
    [118, 33, 129],
    [120, 34, 129],
    [121, 34, 130],
    [123, 35, 130],
    [124, 35, 130],
    [126, 36, 130],
    [128, 37, 130],
    [129, 37, 129],
    [131, 38, 129],
    [132, 38, 129],
    [134, 39, 129],
    [136, 39, 129],
    [137, 40, 129],
    [139, 41, 129],
    [140, 41, 129],
    [142, 42, 129],
    [144, 42, 129],
    [145, 43, 129],
    [147, 43, 128],
    [148, 44, 128],
    [150, 44, 128],
    [152, 45, 128],
    [153, 45, 128],
    [155, 46, 127],
    [156, 46, 127],
    [158, 47, 127],
    [160, 47, 127],
    [161, 48, 126],
    [163, 48, 126],
    [165, 49, 126],
    [166, 49, 125],
    [168, 50, 125],
    [170, 51, 125],
    [171, 51, 124],
    [173, 52, 124],
    [174, 52, 123],
    [176, 53, 123],
    [178, 53, 123],
    [179, 54, 122],
    [181, 54, 122],
    [183, 55, 121],
    [184, 55, 121],
    [186, 56, 120],
    [188, 57, 120],
    [189, 57, 119],
    [191, 58, 119],
    [192, 58, 118],
    [194, 59, 117],
    [196, 60, 117],
    [197, 60, 116],
    [199, 61, 115],
    [200, 62, 115],
    [202, 62, 114],
    [204, 63, 113],
    [205, 64, 113],
    [207, 64, 112],
    [208, 65, 111],
    [210, 66, 111],
    [211, 67, 110],
    [213, 68, 109],
    [214, 69, 108],
    [216, 69, 108],
    [217, 70, 107],
    [219, 71, 106],
    [220, 72, 105],
    [222, 73, 104],
    [223, 74, 104],
    [224, 76, 103],
    [226, 77, 102],
    [227, 78, 101],
    [228, 79, 100],
    [229, 80, 100],
    [231, 82, 99],
    [232, 83, 98],
    [233, 84, 98],
    [234, 86, 97],
    [235, 87, 96],
    [236, 88, 96],
    [237, 90, 95],
    [238, 91, 94],
    [239, 93, 94],
    [240, 95, 94],
    [241, 96, 93],
    [242, 98, 93],
    [242, 100, 92],
    [243, 101, 92],
    [244, 103, 92],
    [244, 105, 92],
    [245, 107, 92],
    [246, 108, 92],
    [246, 110, 92],
    [247, 112, 92],
    [247, 114, 92],
    [248, 116, 92],
    [248, 118, 92],
    [249, 120, 93],
    [249, 121, 93],
    [249, 123, 93],
    [250, 125, 94],
    [250, 127, 94],
    [250, 129, 95],
    [251, 131, 95],
    [251, 133, 96],
    [251, 135, 97],
    [252, 137, 97],
    [252, 138, 98],
    [252, 140, 99],
    [252, 142, 100],
    [252, 144, 101],
    [253, 146, 102],
    [253, 148, 103],
    [253, 150, 104],
    [253, 152, 105],
    [253, 154, 106],
    [253, 155, 107],
    [254, 157, 108],
    [254, 159, 109],
    [254, 161, 110],
    [254, 163, 111],
    [254, 165, 113],
    [254, 167, 114],
    [254, 169, 115],
    [254, 170, 116],
    [254, 172, 118],
    [254, 174, 119],
    [254, 176, 120],
    [254, 178, 122],
    [254, 180, 123],
    [254, 182, 124],
    [254, 183, 126],
    [254, 185, 127],
    [254, 187, 129],
    [254, 189, 130],
    [254, 191, 132],
    [254, 193, 133],
    [254, 194, 135],
    [254, 196, 136],
    [254, 198, 138],
    [254, 200, 140],
    [254, 202, 141],
    [254, 204, 143],
    [254, 205, 144],
    [254, 207, 146],
    [254, 209, 148],
    [254, 211, 149],
    [254, 213, 151],
    [254, 215, 153],
    [254, 216, 154],
    [253, 218, 156],
    [253, 220, 158],
    [253, 222, 160],
    [253, 224, 161],
    [253, 226, 163],
    [253, 227, 165],
    [253, 229, 167],
    [253, 231, 169],
    [253, 233, 170],
    [253, 235, 172],
    [252, 236, 174],
    [252, 238, 176],
    [252, 240, 178],
    [252, 242, 180],
    [252, 244, 182],
    [252, 246, 184],
    [252, 247, 185],
    [252, 249, 187],
    [252, 251, 189],
    [252, 253, 191],
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralq::{ModelConfig, ModelKind};
    use proptest::prelude::*;

    #[test]
    fn even_and_uneven_grids() {
        let g = grid_blocks(64, 64, 32).unwrap();
        assert_eq!(g.len(), 1024);
        assert!(g.iter().all(|r| r.width() == 2 && r.height() == 2));
        let g = grid_blocks(65, 64, 32).unwrap();
        let widths: Vec<usize> = g[..32].iter().map(|r| r.width()).collect();
        assert_eq!(widths.iter().sum::<usize>(), 65);
        // floor(k * 65 / 32): exactly one block takes the extra column.
        let expect: Vec<usize> = (0..32).map(|k| (k + 1) * 65 / 32 - k * 65 / 32).collect();
        assert_eq!(widths, expect);
        assert!(matches!(grid_blocks(16, 16, 32), Err(Error::Size(_))));
    }

    proptest! {
        #[test]
        fn grids_tile_exactly(w in 1usize..200, h in 1usize..200, n in 1usize..40) {
            prop_assume!(w >= n && h >= n);
            let g = grid_blocks(w, h, n).unwrap();
            prop_assert_eq!(g.iter().map(|r| r.area()).sum::<usize>(), w * h);
            for (i, a) in g.iter().enumerate() {
                prop_assert!(a.fits_in(w, h));
                for b in &g[i + 1..] {
                    prop_assert_eq!(a.intersection_area(b), 0);
                }
            }
        }

        #[test]
        fn centers_reproduce_scores(w in 8usize..60, h in 8usize..60, n in 1usize..8, seed in 0u64..500) {
            use rand::Rng as _;
            let mut rng = crate::rng::seeded(seed);
            let rects = grid_blocks(w, h, n).unwrap();
            let scores: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..100.0)).collect();
            let m = QualityMap::new(n, n, scores, rects.clone()).unwrap();
            for (r, &s) in rects.iter().zip(&m.block_scores) {
                let v = m.sample((r.left + r.right) as f64 / 2.0, (r.top + r.bottom) as f64 / 2.0);
                prop_assert!((v - s).abs() < 1e-12);
            }
            let img = ImageBuf::from_fn(w, h, 3, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
            let out = render_map(&img, &m, 0.8).unwrap();
            prop_assert!(out.samples().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn checkerboard_center_is_the_mean() {
        let m = QualityMap::new(2, 2, vec![10.0f64, 90.0, 70.0, 30.0], grid_blocks(4, 4, 2).unwrap()).unwrap();
        assert!((m.sample(2.0, 2.0) - 50.0).abs() < 1e-12);
        // Outside the centers the map is clamped to the edge blocks.
        assert_eq!(m.sample(0.0, 0.0), 10.0);
        assert_eq!(m.sample(4.0, 0.2), 90.0);
    }

    #[test]
    fn render_blend_identities() {
        let img = ImageBuf::from_fn(20, 12, 3, |x, y, c| (x * 7 + y * 3 + c) as f64 % 11.0 / 10.0).unwrap();
        let m = QualityMap::uniform(20, 12, 4, 63.0).unwrap();
        assert_eq!(render_map(&img, &m, 0.0).unwrap(), img);
        let full = render_map(&img, &m, 1.0).unwrap();
        let color = magma(63.0);
        for c in 0..3 {
            assert!(full.plane(c).iter().all(|&v| v == color[c]));
        }
        assert!(render_map(&img, &m, 1.5).is_err());
        assert_eq!(MAGMA[0], [0, 0, 4]);
        assert_eq!(MAGMA[255], [252, 253, 191]);
        assert_eq!(magma(100.0), magma(99.9));
    }

    #[test]
    fn predicted_maps() {
        let img = ImageBuf::from_fn(30, 28, 3, |x, y, _| ((x + y) % 5) as f64 / 4.0).unwrap();
        let base = QualityModel::<f64>::seeded(&ModelConfig::toy(ModelKind::Baseline), 0).unwrap();
        assert!(matches!(predict_map(&base, &img, 8, 32), Err(Error::Capability(_))));
        let mut m = QualityModel::<f64>::seeded(&ModelConfig::toy(ModelKind::RoiPool), 0).unwrap();
        // Zero output layer: every region scores the bias.
        m.head.fc2.weight.values_mut().iter_mut().for_each(|v| *v = 0.0);
        m.head.fc2.bias.values_mut()[0] = 0.4;
        let map = predict_map(&m, &img, 8, 32).unwrap();
        assert_eq!(map.block_rects, grid_blocks(30, 28, 8).unwrap());
        assert!(map.block_scores.iter().all(|&s| (s - 60.0).abs() < 1e-12));
        let mut buf = Vec::new();
        map.write_csv(&mut buf, Some(3)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# schema_version=1,seed=3\n"));
        assert_eq!(text.lines().count(), 9);
    }
}

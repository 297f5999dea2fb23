//! Objective picture features used to steer dataset sampling: absolute
//! brightness, colorfulness, RMS contrast, spatial information, pixel count
//! and face count.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{to_luma, ImageBuf};
use crate::scalar::{mean, population_variance, Real};

pub const FEATURE_NAMES: [&str; 6] = [
    "brightness",
    "colorfulness",
    "rms_contrast",
    "si",
    "pixel_count",
    "face_count",
];

pub const CSV_HEADER: [&str; 7] = [
    "id",
    "brightness",
    "colorfulness",
    "rms_contrast",
    "si",
    "pixel_count",
    "face_count",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub brightness: T,
    pub colorfulness: T,
    pub rms_contrast: T,
    pub spatial_information: T,
    pub pixel_count: u64,
    pub face_count: u32,
}

impl<T: Real> FeatureVector<T> {
    /// Features in [`FEATURE_NAMES`] order.
    pub fn as_array(&self) -> [T; 6] {
        [
            self.brightness,
            self.colorfulness,
            self.rms_contrast,
            self.spatial_information,
            T::lit(self.pixel_count as f64),
            T::lit(self.face_count as f64),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.brightness, self.colorfulness, self.rms_contrast, self.spatial_information]
            .iter()
            .all(|v| v.is_finite() && *v >= T::zero());
        if !finite || self.pixel_count == 0 {
            return Err(Error::Validation(format!("invalid feature vector {self:?}")));
        }
        Ok(())
    }
}

fn require_rgb<T: Real>(img: &ImageBuf<T>) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::Channel(format!("expected 3 channels, got {}", img.channels())));
    }
    Ok(())
}

/// Mean over pixels of `R + G + B`.
pub fn brightness<T: Real>(img: &ImageBuf<T>) -> Result<T> {
    require_rgb(img)?;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let sum: T = (0..img.pixel_count()).map(|i| r[i] + g[i] + b[i]).sum();
    Ok(sum / T::from_usize_lossy(img.pixel_count()))
}

/// Hasler-Süsstrunk colorfulness on the opponent channels `rg = R - G`,
/// `yb = (R + G) / 2 - B` with population statistics.
pub fn colorfulness<T: Real>(img: &ImageBuf<T>) -> Result<T> {
    require_rgb(img)?;
    if img.pixel_count() < 2 {
        return Err(Error::Size("colorfulness needs at least 2 pixels".into()));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let half = T::lit(0.5);
    let rg: Vec<T> = r.iter().zip(g).map(|(&r, &g)| r - g).collect();
    let yb: Vec<T> = (0..img.pixel_count()).map(|i| half * (r[i] + g[i]) - b[i]).collect();
    let (mu_rg, mu_yb) = (mean(&rg).unwrap(), mean(&yb).unwrap());
    let (var_rg, var_yb) = (population_variance(&rg).unwrap(), population_variance(&yb).unwrap());
    Ok((var_rg + var_yb).sqrt() + T::lit(0.3) * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt())
}

/// Global RMS contrast `sigma(luma) / mu(luma)`.
pub fn rms_contrast<T: Real>(img: &ImageBuf<T>) -> Result<T> {
    let luma = to_luma(img);
    let mu = mean(luma.samples()).unwrap();
    if mu <= T::zero() {
        return Err(Error::Degenerate("RMS contrast of an all-black image".into()));
    }
    Ok(population_variance(luma.samples()).unwrap().sqrt() / mu)
}

/// Sobel gradient magnitudes over the valid (unpadded) region of the luma.
pub fn sobel_magnitudes<T: Real>(img: &ImageBuf<T>) -> Result<Vec<T>> {
    let luma = to_luma(img);
    let (w, h) = (luma.width(), luma.height());
    if w < 3 || h < 3 {
        return Err(Error::Size(format!("Sobel needs at least 3x3, got {w}x{h}")));
    }
    let p = luma.samples();
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let at = |dx: isize, dy: isize| p[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
            let gx = (at(1, -1) + two * at(1, 0) + at(1, 1)) - (at(-1, -1) + two * at(-1, 0) + at(-1, 1));
            let gy = (at(-1, 1) + two * at(0, 1) + at(1, 1)) - (at(-1, -1) + two * at(0, -1) + at(1, -1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(out)
}

/// Spatial information: population standard deviation of Sobel magnitudes.
pub fn spatial_information<T: Real>(img: &ImageBuf<T>) -> Result<T> {
    let mags = sobel_magnitudes(img)?;
    Ok(population_variance(&mags).unwrap().sqrt())
}

pub fn feature_vector<T: Real>(img: &ImageBuf<T>, face_count: i64) -> Result<FeatureVector<T>> {
    let face_count = u32::try_from(face_count)
        .map_err(|_| Error::Validation(format!("face count {face_count} must be a nonnegative integer")))?;
    let fv = FeatureVector {
        brightness: brightness(img)?,
        colorfulness: colorfulness(img)?,
        rms_contrast: rms_contrast(img)?,
        spatial_information: spatial_information(img)?,
        pixel_count: img.pixel_count() as u64,
        face_count,
    };
    fv.validate()?;
    Ok(fv)
}

/// Writes the feature table with the fixed header. Floats use the shortest
/// representation that round-trips, so re-emitting a parsed table is
/// byte-identical.
pub fn write_features_csv<T: Real, W: Write>(
    out: W,
    rows: &[(String, FeatureVector<T>)],
    preamble: Option<&str>,
) -> Result<()> {
    let mut out = out;
    if let Some(p) = preamble {
        writeln!(out, "# {p}")?;
    }
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    for (id, f) in rows {
        wtr.write_record([
            id.clone(),
            f.brightness.as_f64().to_string(),
            f.colorfulness.as_f64().to_string(),
            f.rms_contrast.as_f64().to_string(),
            f.spatial_information.as_f64().to_string(),
            f.pixel_count.to_string(),
            f.face_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_features_csv<T: Real, R: Read>(input: R) -> Result<Vec<(String, FeatureVector<T>)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Validation(format!("unexpected feature header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Validation(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Validation(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let fv = FeatureVector {
            brightness: T::lit(num(1)?),
            colorfulness: T::lit(num(2)?),
            rms_contrast: T::lit(num(3)?),
            spatial_information: T::lit(num(4)?),
            pixel_count: int(5)?,
            face_count: u32::try_from(int(6)?).map_err(|e| Error::Validation(e.to_string()))?,
        };
        fv.validate()?;
        rows.push((rec[0].to_string(), fv));
    }
    Ok(rows)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

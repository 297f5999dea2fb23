//! Planar floating-point rasters and the geometry shared by every other
//! module.

use std::path::Path;

use image::{ColorType, DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Half-open pixel rectangle `[left, right) x [top, bottom)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub left: usize,
    pub top: usize,
    pub right: usize,
    pub bottom: usize,
}

impl Rect {
    pub fn new(left: usize, top: usize, right: usize, bottom: usize) -> Result<Self> {
        let r = Rect { left, top, right, bottom };
        r.validate()?;
        Ok(r)
    }

    /// Rectangle of size `width x height` with its top-left corner at `(left, top)`.
    pub fn from_origin(left: usize, top: usize, width: usize, height: usize) -> Result<Self> {
        Self::new(left, top, left + width, top + height)
    }

    pub fn full(width: usize, height: usize) -> Self {
        Rect { left: 0, top: 0, right: width, bottom: height }
    }

    pub fn validate(&self) -> Result<()> {
        if self.left >= self.right || self.top >= self.bottom {
            return Err(Error::Validation(format!("empty or inverted rect {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.right.saturating_sub(self.left)
    }

    pub fn height(&self) -> usize {
        self.bottom.saturating_sub(self.top)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    /// Area of the intersection; zero when disjoint.
    pub fn intersection_area(&self, other: &Rect) -> usize {
        let w = self.right.min(other.right).saturating_sub(self.left.max(other.left));
        let h = self.bottom.min(other.bottom).saturating_sub(self.top.max(other.top));
        w * h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.left < self.right && self.top < self.bottom && self.right <= width && self.bottom <= height
    }

    pub fn translate(&self, dx: usize, dy: usize) -> Rect {
        Rect {
            left: self.left + dx,
            top: self.top + dy,
            right: self.right + dx,
            bottom: self.bottom + dy,
        }
    }
}

/// Planar raster: all samples of channel 0 row-major, then channel 1, ...
///
/// Every sample lies in `[0, 1]`; constructors reject anything else.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf<T> {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<T>,
}

impl<T: Real> ImageBuf<T> {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("zero-sized image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Channel(format!("unsupported channel count {channels}")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !(**s >= T::zero() && **s <= T::one())) {
            return Err(Error::Range(format!("sample {bad} outside [0,1]")));
        }
        Ok(ImageBuf { width, height, channels, samples })
    }

    /// Constant image. `value` is clamped into `[0, 1]`.
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        let v = value.max(T::zero()).min(T::one());
        Self::new(width, height, channels, vec![v; width * height * channels])
    }

    /// Builds an image from `f(x, y, c)`; outputs are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    samples.push(f(x, y, c).max(T::zero()).min(T::one()));
                }
            }
        }
        Self::new(width, height, channels, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.pixel_count();
        &self.samples[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.samples[(c * self.height + y) * self.width + x]
    }

    pub fn bounds(&self) -> Rect {
        Rect::full(self.width, self.height)
    }

    pub fn convert<U: Real>(&self) -> ImageBuf<U> {
        ImageBuf {
            width: self.width,
            height: self.height,
            channels: self.channels,
            samples: self.samples.iter().map(|s| U::lit(s.as_f64())).collect(),
        }
    }

    /// Replicates a single plane into three channels; 3-channel input is cloned.
    pub fn to_rgb(&self) -> ImageBuf<T> {
        if self.channels == 3 {
            return self.clone();
        }
        let mut samples = Vec::with_capacity(self.samples.len() * 3);
        for _ in 0..3 {
            samples.extend_from_slice(&self.samples);
        }
        ImageBuf { width: self.width, height: self.height, channels: 3, samples }
    }

    /// Mirror around the vertical axis.
    pub fn flip_horizontal(&self) -> ImageBuf<T> {
        let mut out = self.samples.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                let row = (c * self.height + y) * self.width;
                for x in 0..self.width {
                    out[row + x] = self.samples[row + self.width - 1 - x];
                }
            }
        }
        ImageBuf { samples: out, ..*self }
    }

    /// 8-bit interleaved encoding of the samples (round to nearest).
    pub fn to_dynamic(&self) -> DynamicImage {
        let q = |s: T| (s.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            let buf: Vec<u8> = self.samples.iter().map(|&s| q(s)).collect();
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, buf).expect("buffer size"))
        } else {
            let n = self.pixel_count();
            let mut buf = Vec::with_capacity(n * 3);
            for i in 0..n {
                for c in 0..3 {
                    buf.push(q(self.samples[c * n + i]));
                }
            }
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, buf).expect("buffer size"))
        }
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::Decode("zero-dimension image".into()));
        }
        let scale = |v: u8| T::lit(v as f64 / 255.0);
        let gray = matches!(img.color(), ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16);
        if gray {
            let g = img.to_luma8();
            Self::new(w, h, 1, g.as_raw().iter().map(|&v| scale(v)).collect())
        } else {
            let rgb = img.to_rgb8();
            let raw = rgb.as_raw();
            let n = w * h;
            let mut samples = vec![T::zero(); n * 3];
            for i in 0..n {
                for c in 0..3 {
                    samples[c * n + i] = scale(raw[i * 3 + c]);
                }
            }
            Self::new(w, h, 3, samples)
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_dynamic()
            .save_with_format(path.as_ref(), image::ImageFormat::Png)
            .map_err(|e| Error::Encode(format!("{}: {e}", path.as_ref().display())))
    }
}

/// Decodes a PNG or JPEG file. Grayscale sources give one channel, everything
/// else three (alpha is dropped). 8-bit value `v` maps to `v / 255`.
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<ImageBuf<T>> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        other => {
            return Err(Error::Decode(format!("{}: unsupported format {other:?}", path.display())))
        }
    }
    let img = reader
        .decode()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    ImageBuf::from_dynamic(&img)
}

/// Centers `img` on a white `width x height` canvas. Offsets use floor for odd
/// differences. Returns the padded image and the rect the content occupies.
pub fn white_pad_to<T: Real>(img: &ImageBuf<T>, width: usize, height: usize) -> Result<(ImageBuf<T>, Rect)> {
    if img.width > width || img.height > height {
        return Err(Error::Dimension(format!(
            "{}x{} image does not fit in {width}x{height}",
            img.width, img.height
        )));
    }
    let ox = (width - img.width) / 2;
    let oy = (height - img.height) / 2;
    let mut samples = vec![T::one(); width * height * img.channels];
    for c in 0..img.channels {
        for y in 0..img.height {
            let src = (c * img.height + y) * img.width;
            let dst = (c * height + y + oy) * width + ox;
            samples[dst..dst + img.width].copy_from_slice(&img.samples[src..src + img.width]);
        }
    }
    let content = Rect::from_origin(ox, oy, img.width, img.height)?;
    Ok((ImageBuf { width, height, channels: img.channels, samples }, content))
}

/// Square white padding to `side x side` with centered content.
pub fn white_pad<T: Real>(img: &ImageBuf<T>, side: usize) -> Result<ImageBuf<T>> {
    white_pad_to(img, side, side).map(|(padded, _)| padded)
}

pub fn crop<T: Real>(img: &ImageBuf<T>, r: Rect) -> Result<ImageBuf<T>> {
    if !r.fits_in(img.width, img.height) {
        return Err(Error::Bounds(format!(
            "rect {r:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    let (w, h) = (r.width(), r.height());
    let mut samples = Vec::with_capacity(w * h * img.channels);
    for c in 0..img.channels {
        for y in r.top..r.bottom {
            let row = (c * img.height + y) * img.width;
            samples.extend_from_slice(&img.samples[row + r.left..row + r.right]);
        }
    }
    Ok(ImageBuf { width: w, height: h, channels: img.channels, samples })
}

/// Rec.601 luma; single-channel input is returned unchanged.
pub fn to_luma<T: Real>(img: &ImageBuf<T>) -> ImageBuf<T> {
    if img.channels == 1 {
        return img.clone();
    }
    let [wr, wg, wb] = LUMA_WEIGHTS.map(T::lit);
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let samples = (0..img.pixel_count())
        .map(|i| (wr * r[i] + wg * g[i] + wb * b[i]).min(T::one()).max(T::zero()))
        .collect();
    ImageBuf { width: img.width, height: img.height, channels: 1, samples }
}

//! PNG output carrying `schema_version` and `seed` text chunks.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use patchq::imgcore::ImageBuf;
use patchq::{Error, Real, Result, SCHEMA_VERSION};

pub fn save_png_tagged<T: Real>(img: &ImageBuf<T>, path: impl AsRef<Path>, seed: u64) -> Result<()> {
    let path = path.as_ref();
    let enc_err = |e: png::EncodingError| Error::Encode(format!("{}: {e}", path.display()));
    let dynamic = img.to_dynamic();
    let (color, data) = if img.channels() == 1 {
        (png::ColorType::Grayscale, dynamic.to_luma8().into_raw())
    } else {
        (png::ColorType::Rgb, dynamic.to_rgb8().into_raw())
    };
    let file = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    enc.add_text_chunk("schema_version".into(), SCHEMA_VERSION.to_string()).map_err(enc_err)?;
    enc.add_text_chunk("seed".into(), seed.to_string()).map_err(enc_err)?;
    let mut w = enc.write_header().map_err(enc_err)?;
    w.write_image_data(&data).map_err(enc_err)?;
    w.finish().map_err(enc_err)?;
    Ok(())
}

/// Text chunks of a PNG file as `(keyword, text)` pairs.
pub fn read_png_text(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = std::io::BufReader::new(File::open(path)?);
    let reader = png::Decoder::new(file)
        .read_info()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect())
}

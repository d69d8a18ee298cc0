//! 8-bit sRGB PNG codec. Values map to `[0, 1]` by division by 255; encoding rounds.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};

use super::image::Image;

pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn to_rgb8(img: &Image) -> RgbImage {
    let (h, w) = img.dims();
    let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, raw).expect("buffer sized from image")
}

pub fn from_rgb8(buf: &RgbImage) -> Result<Image> {
    let (w, h) = buf.dimensions();
    let data = buf.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(h as usize, w as usize, data)
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })?;
    from_rgb8(&decoded.to_rgb8())
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_rgb8(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
    Ok(out.into_inner())
}

pub fn write_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
pub fn quantized(img: &Image) -> Image {
    let data = img.data().iter().map(|&v| quantize(v) as f64 / 255.0).collect();
    Image::from_vec(img.height(), img.width(), data).expect("dims preserved")
}

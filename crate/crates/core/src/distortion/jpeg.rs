use image::RgbImage;
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};

use crate::error::{AswError, Result};

/// Baseline JFIF with libjpeg-scaled Annex K tables and 4:2:0 chroma.
pub fn jpeg_encode(img: &RgbImage, quality: u8) -> Result<Vec<u8>> {
    let (w, h) = img.dimensions();
    let w16 = u16::try_from(w).map_err(|_| AswError::Codec(format!("width {w} too large for JPEG")))?;
    let h16 = u16::try_from(h).map_err(|_| AswError::Codec(format!("height {h} too large for JPEG")))?;
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, quality);
    enc.set_sampling_factor(SamplingFactor::F_2_2);
    enc.encode(img.as_raw(), w16, h16, ColorType::Rgb)
        .map_err(|e| AswError::Codec(format!("jpeg encode: {e}")))?;
    Ok(out)
}

pub fn jpeg_decode(bytes: &[u8]) -> Result<RgbImage> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map(|i| i.to_rgb8())
        .map_err(|e| AswError::Codec(format!("jpeg decode: {e}")))
}

pub fn jpeg_roundtrip(img: &RgbImage, quality: u8) -> Result<RgbImage> {
    jpeg_decode(&jpeg_encode(img, quality)?)
}

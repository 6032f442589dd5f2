//! Conversions between 8-bit RGB images and `[3, H, W]` float tensors.

use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;

use crate::error::{AswError, Result};
use crate::tensor::Tensor;

/// `[3, H, W]` tensor in `[0, 1]`.
pub fn to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        let idx = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + idx] = f64::from(px[c]) / 255.0;
        }
    }
    Tensor::new(&[3, h, w], data).expect("consistent image shape")
}

/// Scale by 255 and round half away from zero, saturating to `[0, 255]`.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn from_tensor(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t.chw()?;
    if c != 3 {
        return Err(AswError::ShapeMismatch(format!("expected 3 channels, got {c}")));
    }
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let idx = y as usize * w + x as usize;
        image::Rgb([quantize(d[idx]), quantize(d[h * w + idx]), quantize(d[2 * h * w + idx])])
    }))
}

/// Element-wise clamp onto `[0, 1]`. Returns whether anything moved.
pub fn clip_unit(t: &mut Tensor) -> bool {
    let mut moved = false;
    for v in t.data_mut() {
        let c = v.clamp(0.0, 1.0);
        if c != *v {
            *v = c;
            moved = true;
        }
    }
    moved
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| AswError::Codec(format!("{}: {e}", path.display())))
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save(path)
        .map_err(|e| AswError::Codec(format!("{}: {e}", path.display())))
}

/// Center-crop to a square and resample to `size × size` (Lanczos3). Images
/// already at the target size are returned untouched.
pub fn square_resize(img: &RgbImage, size: u32) -> RgbImage {
    if img.width() == size && img.height() == size {
        return img.clone();
    }
    let side = img.width().min(img.height());
    let x0 = (img.width() - side) / 2;
    let y0 = (img.height() - side) / 2;
    let crop = image::imageops::crop_imm(img, x0, y0, side, side).to_image();
    image::imageops::resize(&crop, size, size, FilterType::Lanczos3)
}

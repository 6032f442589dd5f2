use image::RgbImage;

use super::to_u8;
use crate::error::{AswError, Result};
use crate::rng::Philox;

fn luma(p: &image::Rgb<u8>) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

pub(crate) fn brightness(img: &RgbImage, factor: f64) -> RgbImage {
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = to_u8(f64::from(*v) * factor);
    }
    out
}

pub(crate) fn contrast(img: &RgbImage, factor: f64) -> RgbImage {
    let n = f64::from(img.width()) * f64::from(img.height());
    let mean = img.pixels().map(luma).sum::<f64>() / n;
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = to_u8(mean + factor * (f64::from(*v) - mean));
    }
    out
}

pub(crate) fn saturation(img: &RgbImage, factor: f64) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let y = luma(px);
        for c in 0..3 {
            px[c] = to_u8(y + factor * (f64::from(px[c]) - y));
        }
    }
    out
}

/// Replace one random axis-aligned rectangle covering `fraction` of the area
/// with the host pixels. The rectangle has the image's aspect ratio.
pub(crate) fn cropout(img: &RgbImage, host: &RgbImage, fraction: f64, rng: &mut Philox) -> Result<RgbImage> {
    if host.dimensions() != img.dimensions() {
        return Err(AswError::ShapeMismatch(format!(
            "cropout host {:?} vs image {:?}",
            host.dimensions(),
            img.dimensions()
        )));
    }
    let (w, h) = img.dimensions();
    let side = fraction.sqrt();
    let rw = ((f64::from(w) * side).round() as u32).min(w);
    let rh = ((f64::from(h) * side).round() as u32).min(h);
    let x0 = rng.below(u64::from(w - rw) + 1) as u32;
    let y0 = rng.below(u64::from(h - rh) + 1) as u32;
    let mut out = img.clone();
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            out.put_pixel(x, y, *host.get_pixel(x, y));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::tests::textured;

    #[test]
    fn brightness_saturates() {
        let img = RgbImage::from_pixel(2, 2, image::Rgb([200, 100, 0]));
        assert_eq!(brightness(&img, 1.5).get_pixel(0, 0).0, [255, 150, 0]);
        assert_eq!(brightness(&img, 0.5).get_pixel(0, 0).0, [100, 50, 0]);
    }

    #[test]
    fn contrast_zero_gives_mean_luma() {
        let img = textured(16, 16, 1);
        let n = 256.0;
        let mean = img.pixels().map(luma).sum::<f64>() / n;
        let flat = contrast(&img, 0.0);
        assert!(flat.as_raw().iter().all(|&v| v == to_u8(mean)));
    }

    #[test]
    fn saturation_zero_is_gray() {
        let img = textured(16, 16, 2);
        let gray = saturation(&img, 0.0);
        for (a, b) in gray.pixels().zip(img.pixels()) {
            assert!(a[0] == a[1] && a[1] == a[2]);
            assert_eq!(a[0], to_u8(luma(b)));
        }
    }

    #[test]
    fn cropout_area_matches_fraction() {
        let img = RgbImage::from_pixel(100, 100, image::Rgb([0; 3]));
        let host = RgbImage::from_pixel(100, 100, image::Rgb([255; 3]));
        for (fraction, expected) in [(0.25, 2500), (0.75, 7569), (1.0, 10_000)] {
            let out = cropout(&img, &host, fraction, &mut Philox::new(4)).unwrap();
            let replaced = out.pixels().filter(|p| p[0] == 255).count();
            assert_eq!(replaced, expected, "{fraction}");
        }
        assert!(cropout(&img, &RgbImage::new(10, 10), 0.5, &mut Philox::new(1)).is_err());
    }
}

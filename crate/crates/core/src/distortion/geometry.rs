use image::RgbImage;

use super::{to_u8, ResizeAxis};

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &RgbImage, new_w: u32, new_h: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    if (w, h) == (new_w, new_h) {
        return img.clone();
    }
    let sx = f64::from(w) / f64::from(new_w);
    let sy = f64::from(h) / f64::from(new_h);
    RgbImage::from_fn(new_w, new_h, |x, y| {
        let fx = ((f64::from(x) + 0.5) * sx - 0.5).clamp(0.0, f64::from(w - 1));
        let fy = ((f64::from(y) + 0.5) * sy - 0.5).clamp(0.0, f64::from(h - 1));
        let (x0, y0) = (fx.floor() as u32, fy.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (ax, ay) = (fx - f64::from(x0), fy - f64::from(y0));
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let p = |xx, yy| f64::from(img.get_pixel(xx, yy)[c]);
            let top = p(x0, y0) * (1.0 - ax) + p(x1, y0) * ax;
            let bot = p(x0, y1) * (1.0 - ax) + p(x1, y1) * ax;
            *out = to_u8(top * (1.0 - ay) + bot * ay);
        }
        image::Rgb(px)
    })
}

pub(crate) fn resize_and_back(img: &RgbImage, ratio: f64, axis: ResizeAxis) -> RgbImage {
    let (w, h) = img.dimensions();
    let scale = |n: u32| ((f64::from(n) * ratio).round() as u32).max(1);
    let (nw, nh) = match axis {
        ResizeAxis::Both => (scale(w), scale(h)),
        ResizeAxis::Width => (scale(w), h),
    };
    if (nw, nh) == (w, h) {
        return img.clone();
    }
    resize_bilinear(&resize_bilinear(img, nw, nh), w, h)
}

/// Rotate counter-clockwise by `degrees` about the image center, keeping the
/// canvas size. Samples falling outside the source are black.
pub fn rotate_bilinear(img: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = img.dimensions();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = (f64::from(w) - 1.0) / 2.0;
    let cy = (f64::from(h) - 1.0) / 2.0;
    RgbImage::from_fn(w, h, |x, y| {
        // Inverse map: destination -> source.
        let dx = f64::from(x) - cx;
        let dy = f64::from(y) - cy;
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        let x0 = sx.floor();
        let y0 = sy.floor();
        let (ax, ay) = (sx - x0, sy - y0);
        let sample = |xx: f64, yy: f64, c: usize| -> f64 {
            if xx < 0.0 || yy < 0.0 || xx > f64::from(w - 1) || yy > f64::from(h - 1) {
                0.0
            } else {
                f64::from(img.get_pixel(xx as u32, yy as u32)[c])
            }
        };
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let top = sample(x0, y0, c) * (1.0 - ax) + sample(x0 + 1.0, y0, c) * ax;
            let bot = sample(x0, y0 + 1.0, c) * (1.0 - ax) + sample(x0 + 1.0, y0 + 1.0, c) * ax;
            *out = to_u8(top * (1.0 - ay) + bot * ay);
        }
        image::Rgb(px)
    })
}

pub(crate) fn rotate_and_back(img: &RgbImage, degrees: f64) -> RgbImage {
    if degrees == 0.0 {
        return img.clone();
    }
    rotate_bilinear(&rotate_bilinear(img, degrees), -degrees)
}

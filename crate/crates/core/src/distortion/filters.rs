use image::RgbImage;

use super::to_u8;

/// Kernel-size to sigma rule used when only the kernel size is given.
pub fn gaussian_sigma_for_kernel(k: usize) -> f64 {
    0.3 * ((k as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

/// Mirror an out-of-range index back into `[0, n)` without repeating the
/// edge sample (`dcb|abcd|cba`).
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

fn planes(img: &RgbImage) -> [Vec<f64>; 3] {
    let raw = img.as_raw();
    std::array::from_fn(|c| raw.iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect())
}

fn from_planes(w: u32, h: u32, p: &[Vec<f64>; 3]) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let i = (y * w + x) as usize;
        image::Rgb([to_u8(p[0][i]), to_u8(p[1][i]), to_u8(p[2][i])])
    })
}

pub fn gaussian_blur(img: &RgbImage, k: usize) -> RgbImage {
    let sigma = gaussian_sigma_for_kernel(k);
    let r = (k / 2) as isize;
    let mut kernel: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= s);

    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = planes(img);
    let out: [Vec<f64>; 3] = std::array::from_fn(|c| {
        let p = &src[c];
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * p[y * w + reflect101(x as isize + i as isize - r, w)])
                    .sum();
            }
        }
        let mut o = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                o[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * tmp[reflect101(y as isize + i as isize - r, h) * w + x])
                    .sum();
            }
        }
        o
    });
    from_planes(img.width(), img.height(), &out)
}

pub fn median_blur(img: &RgbImage, k: usize) -> RgbImage {
    let r = (k / 2) as isize;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = img.clone();
    let mut window = Vec::with_capacity(k * k);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                window.clear();
                for dy in -r..=r {
                    let yy = reflect101(y as isize + dy, h) as u32;
                    for dx in -r..=r {
                        let xx = reflect101(x as isize + dx, w) as u32;
                        window.push(img.get_pixel(xx, yy)[c]);
                    }
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable(mid);
                out.get_pixel_mut(x as u32, y as u32)[c] = *m;
            }
        }
    }
    out
}

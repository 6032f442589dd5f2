use image::RgbImage;

use super::to_u8;
use crate::rng::Philox;
use crate::tensor::Tensor;

pub(crate) fn gaussian(img: &RgbImage, sigma: f64, rng: &mut Philox) -> RgbImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = to_u8(f64::from(*v) + 255.0 * sigma * rng.gaussian());
    }
    out
}

pub(crate) fn poisson(img: &RgbImage, strength: f64, rng: &mut Philox) -> RgbImage {
    if strength == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for v in out.iter_mut() {
        let x = f64::from(*v);
        let shot = rng.poisson(x) as f64;
        *v = to_u8((1.0 - strength) * x + strength * shot);
    }
    out
}

pub(crate) fn salt_pepper(img: &RgbImage, p: f64, rng: &mut Philox) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        if rng.bernoulli(p) {
            let v = if rng.bernoulli(0.5) { 255 } else { 0 };
            px.0 = [v; 3];
        }
    }
    out
}

/// Two Gaussian noise patterns on complementary random supports.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalNoisePair {
    pub n_plus: Tensor,
    pub n_minus: Tensor,
    /// 1 where `n_plus` lives, 0 where `n_minus` lives.
    pub mask: Tensor,
}

/// Draw a Bernoulli(0.5) mask `M` and `n+ = N(0, sigma) * M`,
/// `n- = N(0, sigma) * (1 - M)`. The supports are disjoint, so
/// `<n+, n-> = 0` exactly.
pub fn make_orthogonal_noise(shape: &[usize], sigma: f64, seed: u64) -> OrthogonalNoisePair {
    let mut mask = Tensor::zeros(shape);
    let mut n_plus = Tensor::zeros(shape);
    let mut n_minus = Tensor::zeros(shape);
    let mut rng = Philox::new(seed);
    for i in 0..mask.len() {
        let z = sigma * rng.gaussian();
        if rng.bernoulli(0.5) {
            mask.data_mut()[i] = 1.0;
            n_plus.data_mut()[i] = z;
        } else {
            n_minus.data_mut()[i] = z;
        }
    }
    OrthogonalNoisePair { n_plus, n_minus, mask }
}

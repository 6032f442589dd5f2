//! The benchmark distortions, each a deterministic function of
//! `(image, spec, noise_seed)`.
//!
//! Geometric distortions (resize, rotation) are undone before returning, so
//! every output has the input's dimensions and can be fed straight to the
//! extractor.

mod filters;
mod geometry;
mod jpeg;
mod noise;
mod photometric;

use std::fmt;

use image::RgbImage;

use crate::error::{AswError, Result};
use crate::rng::Philox;

pub use filters::{gaussian_blur, gaussian_sigma_for_kernel, median_blur};
pub use geometry::{resize_bilinear, rotate_bilinear};
pub use jpeg::{jpeg_decode, jpeg_encode, jpeg_roundtrip};
pub use noise::{make_orthogonal_noise, OrthogonalNoisePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResizeAxis {
    Both,
    Width,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistortionKind {
    /// Baseline JPEG at quality factor 1..=100 with 4:2:0 chroma.
    Jpeg { quality: u8 },
    /// Gaussian blur with an odd `kernel` size; sigma follows the kernel.
    GaussianBlur { kernel: usize },
    MedianBlur { kernel: usize },
    /// Additive white Gaussian noise, sigma on the `[0, 1]` intensity scale.
    GaussianNoise { sigma: f64 },
    /// `(1 - a) x + a Poisson(255 x) / 255`.
    PoissonNoise { strength: f64 },
    /// Each pixel (all channels) becomes black or white with probability `p`.
    SaltPepper { p: f64 },
    Brightness { factor: f64 },
    /// Scale deviations from the mean luma.
    Contrast { factor: f64 },
    /// Blend each pixel with its own luma.
    Saturation { factor: f64 },
    /// One random rectangle covering `fraction` of the area is replaced by
    /// the host image.
    Cropout { fraction: f64 },
    /// Bilinear down/up-scale by `ratio` and back to the original size.
    Resize { ratio: f64, axis: ResizeAxis },
    /// Bilinear rotation about the center with zero fill, then rotated back.
    Rotation { degrees: f64 },
}

impl DistortionKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistortionKind::Jpeg { .. } => "jpeg",
            DistortionKind::GaussianBlur { .. } => "gaussian_blur",
            DistortionKind::MedianBlur { .. } => "median_blur",
            DistortionKind::GaussianNoise { .. } => "gaussian_noise",
            DistortionKind::PoissonNoise { .. } => "poisson_noise",
            DistortionKind::SaltPepper { .. } => "salt_pepper",
            DistortionKind::Brightness { .. } => "brightness",
            DistortionKind::Contrast { .. } => "contrast",
            DistortionKind::Saturation { .. } => "saturation",
            DistortionKind::Cropout { .. } => "cropout",
            DistortionKind::Resize { axis: ResizeAxis::Both, .. } => "resize",
            DistortionKind::Resize { axis: ResizeAxis::Width, .. } => "resize_width",
            DistortionKind::Rotation { .. } => "rotation",
        }
    }

    /// The single strength parameter of the kind.
    pub fn level(&self) -> f64 {
        match *self {
            DistortionKind::Jpeg { quality } => f64::from(quality),
            DistortionKind::GaussianBlur { kernel } | DistortionKind::MedianBlur { kernel } => kernel as f64,
            DistortionKind::GaussianNoise { sigma } => sigma,
            DistortionKind::PoissonNoise { strength } => strength,
            DistortionKind::SaltPepper { p } => p,
            DistortionKind::Brightness { factor }
            | DistortionKind::Contrast { factor }
            | DistortionKind::Saturation { factor } => factor,
            DistortionKind::Cropout { fraction } => fraction,
            DistortionKind::Resize { ratio, .. } => ratio,
            DistortionKind::Rotation { degrees } => degrees,
        }
    }

    /// Build a kind from its name (as returned by [`name`](Self::name)) and level.
    pub fn from_name(name: &str, level: f64) -> Result<Self> {
        let kernel = || {
            if level.fract() != 0.0 || level < 0.0 {
                Err(AswError::InvalidDistortion(format!("kernel size {level} is not an integer")))
            } else {
                Ok(level as usize)
            }
        };
        let kind = match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "jpeg" => {
                if level.fract() != 0.0 || !(1.0..=100.0).contains(&level) {
                    return Err(AswError::InvalidDistortion(format!("JPEG quality {level} not in 1..=100")));
                }
                DistortionKind::Jpeg { quality: level as u8 }
            }
            "gaussian_blur" | "blur" => DistortionKind::GaussianBlur { kernel: kernel()? },
            "median_blur" | "median" => DistortionKind::MedianBlur { kernel: kernel()? },
            "gaussian_noise" | "noise" => DistortionKind::GaussianNoise { sigma: level },
            "poisson_noise" | "poisson" => DistortionKind::PoissonNoise { strength: level },
            "salt_pepper" | "saltpepper" => DistortionKind::SaltPepper { p: level },
            "brightness" => DistortionKind::Brightness { factor: level },
            "contrast" => DistortionKind::Contrast { factor: level },
            "saturation" => DistortionKind::Saturation { factor: level },
            "cropout" => DistortionKind::Cropout { fraction: level },
            "resize" => DistortionKind::Resize { ratio: level, axis: ResizeAxis::Both },
            "resize_width" => DistortionKind::Resize { ratio: level, axis: ResizeAxis::Width },
            "rotation" | "rotate" => DistortionKind::Rotation { degrees: level },
            other => return Err(AswError::InvalidDistortion(format!("unknown distortion {other:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AswError::InvalidDistortion(m));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        match *self {
            DistortionKind::Jpeg { quality } if !(1..=100).contains(&quality) => {
                bad(format!("JPEG quality {quality} not in 1..=100"))
            }
            DistortionKind::GaussianBlur { kernel } | DistortionKind::MedianBlur { kernel }
                if kernel < 3 || kernel % 2 == 0 =>
            {
                bad(format!("kernel size {kernel} must be odd and >= 3"))
            }
            DistortionKind::GaussianNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("noise sigma {sigma} must be >= 0"))
            }
            DistortionKind::PoissonNoise { strength } if !unit(strength) => {
                bad(format!("Poisson strength {strength} not in [0, 1]"))
            }
            DistortionKind::SaltPepper { p } if !unit(p) => bad(format!("salt-and-pepper p {p} not in [0, 1]")),
            DistortionKind::Brightness { factor }
            | DistortionKind::Contrast { factor }
            | DistortionKind::Saturation { factor }
                if !(factor >= 0.0 && factor.is_finite()) =>
            {
                bad(format!("photometric factor {factor} must be >= 0"))
            }
            DistortionKind::Cropout { fraction } if !unit(fraction) => {
                bad(format!("cropout fraction {fraction} not in [0, 1]"))
            }
            DistortionKind::Resize { ratio, .. } if !(ratio > 0.0 && ratio <= 2.0) => {
                bad(format!("resize ratio {ratio} not in (0, 2]"))
            }
            DistortionKind::Rotation { degrees } if !degrees.is_finite() => bad("rotation angle must be finite".into()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.level())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub noise_seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, noise_seed: u64) -> Self {
        DistortionSpec { kind, noise_seed }
    }
}

/// Apply `spec` to an 8-bit image. `host` is required for cropout and
/// ignored otherwise.
pub fn apply(image: &RgbImage, spec: &DistortionSpec, host: Option<&RgbImage>) -> Result<RgbImage> {
    spec.kind.validate()?;
    let mut rng = Philox::new(spec.noise_seed);
    match spec.kind {
        DistortionKind::Jpeg { quality } => jpeg_roundtrip(image, quality),
        DistortionKind::GaussianBlur { kernel } => Ok(gaussian_blur(image, kernel)),
        DistortionKind::MedianBlur { kernel } => Ok(median_blur(image, kernel)),
        DistortionKind::GaussianNoise { sigma } => Ok(noise::gaussian(image, sigma, &mut rng)),
        DistortionKind::PoissonNoise { strength } => Ok(noise::poisson(image, strength, &mut rng)),
        DistortionKind::SaltPepper { p } => Ok(noise::salt_pepper(image, p, &mut rng)),
        DistortionKind::Brightness { factor } => Ok(photometric::brightness(image, factor)),
        DistortionKind::Contrast { factor } => Ok(photometric::contrast(image, factor)),
        DistortionKind::Saturation { factor } => Ok(photometric::saturation(image, factor)),
        DistortionKind::Cropout { fraction } => {
            let host = host.ok_or_else(|| AswError::InvalidDistortion("cropout needs the host image".into()))?;
            photometric::cropout(image, host, fraction, &mut rng)
        }
        DistortionKind::Resize { ratio, axis } => Ok(geometry::resize_and_back(image, ratio, axis)),
        DistortionKind::Rotation { degrees } => Ok(geometry::rotate_and_back(image, degrees)),
    }
}

pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

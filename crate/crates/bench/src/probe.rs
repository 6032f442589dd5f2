use anyhow::{bail, Result};
use asw_core::decoder::{self, DecoderConfig};
use asw_core::distortion::{make_orthogonal_noise, resize_bilinear};
use asw_core::rng::{derive_seed, Philox};
use asw_core::{build_decoder, imaging, Tensor};
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions {
    pub depths: Vec<usize>,
    pub sigma: f64,
    pub n_images: usize,
    pub seed: u64,
    pub image_size: u32,
    /// Base decoder; its depth is overridden per row.
    pub decoder: DecoderConfig,
    /// Source photos. When non-empty, probe images are random crops of
    /// them; otherwise they are synthetic smooth random textures.
    pub corpus: Vec<RgbImage>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            depths: vec![3, 4, 5, 6],
            sigma: 10.0 / 255.0,
            n_images: 100,
            seed: 1,
            image_size: 256,
            decoder: DecoderConfig::default(),
            corpus: Vec::new(),
        }
    }
}

/// Flip rates, in percent of output bits, at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub depth: usize,
    pub flip_plus: f64,
    pub flip_minus: f64,
    pub flip_mean: f64,
}

/// Synthetic probe image: a coarse random colour grid upsampled to `size`
/// plus mild pixel noise.
pub fn synthetic_image(size: u32, seed: u64) -> RgbImage {
    let mut r = Philox::new(seed);
    let cells = 4 + r.below(13) as u32;
    let coarse = RgbImage::from_fn(cells, cells, |_, _| image::Rgb([0; 3].map(|_: u8| r.below(256) as u8)));
    let mut img = resize_bilinear(&coarse, size, size);
    for v in img.iter_mut() {
        *v = (f64::from(*v) + 6.0 * r.gaussian()).round().clamp(0.0, 255.0) as u8;
    }
    img
}

/// Random square crop of a random corpus image, resized to `size` and
/// randomly mirrored.
pub fn corpus_crop(corpus: &[RgbImage], size: u32, seed: u64) -> RgbImage {
    let mut r = Philox::new(seed);
    let src = &corpus[r.below(corpus.len() as u64) as usize];
    let (w, h) = src.dimensions();
    let side = ((f64::from(w.min(h)) * r.uniform(0.5, 1.0)).round() as u32).max(1);
    let x0 = r.below(u64::from(w - side) + 1) as u32;
    let y0 = r.below(u64::from(h - side) + 1) as u32;
    let crop = image::imageops::crop_imm(src, x0, y0, side, side).to_image();
    let mut out = resize_bilinear(&crop, size, size);
    if r.bernoulli(0.5) {
        image::imageops::flip_horizontal_in_place(&mut out);
    }
    out
}

fn flips(cfg: &DecoderConfig, w: &asw_core::DecoderWeights, x: &Tensor, noise: &Tensor) -> Result<usize> {
    let base = decoder::extract_message(cfg, w, x)?;
    let mut y = x.clone();
    for (a, b) in y.data_mut().iter_mut().zip(noise.data()) {
        *a += b;
    }
    Ok(base.hamming(&decoder::extract_message(cfg, w, &y)?)?)
}

/// Output-bit flip rate of random decoders under the orthogonal noise pair,
/// one row per depth. The same probe images and noises are used at every
/// depth.
pub fn run_depth_probe(opts: &ProbeOptions) -> Result<Vec<ProbeRow>> {
    if opts.depths.iter().any(|d| !(3..=8).contains(d)) {
        bail!("probe depths must lie in 3..=8");
    }
    if opts.n_images == 0 {
        bail!("probe needs at least one image");
    }
    let size = opts.image_size as usize;
    let images: Vec<Tensor> = (0..opts.n_images)
        .map(|i| {
            let s = derive_seed(&[opts.seed, 0, i as u64]);
            let img = if opts.corpus.is_empty() {
                synthetic_image(opts.image_size, s)
            } else {
                corpus_crop(&opts.corpus, opts.image_size, s)
            };
            imaging::to_tensor(&img)
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(crate::runner::thread_count()).build()?;
    let mut rows = Vec::new();
    for &depth in &opts.depths {
        let cfg = DecoderConfig { depth, ..opts.decoder.clone() };
        cfg.feature_extent(size, size)?;
        let w = build_decoder(&cfg)?;
        let counts: Vec<Result<(usize, usize)>> = pool.install(|| {
            images
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let pair = make_orthogonal_noise(x.shape(), opts.sigma, derive_seed(&[opts.seed, 1, i as u64]));
                    Ok((flips(&cfg, &w, x, &pair.n_plus)?, flips(&cfg, &w, x, &pair.n_minus)?))
                })
                .collect()
        });
        let (mut plus, mut minus) = (0, 0);
        for c in counts {
            let (p, m) = c?;
            plus += p;
            minus += m;
        }
        let total = (opts.n_images * cfg.message_len) as f64;
        let (fp, fm) = (100.0 * plus as f64 / total, 100.0 * minus as f64 / total);
        rows.push(ProbeRow { depth, flip_plus: fp, flip_minus: fm, flip_mean: (fp + fm) / 2.0 });
    }
    Ok(rows)
}

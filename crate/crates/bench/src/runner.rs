use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use asw_core::distortion::{self, DistortionKind, DistortionSpec};
use asw_core::rng::{derive_seed, Philox};
use asw_core::{build_decoder, embed, extract, imaging, metrics, DecoderConfig, DecoderWeights, EmbedConfig, WatermarkMessage};
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::plan::BenchPlan;

/// Name used for the undistorted channel in reports.
pub const CLEAN: &str = "none";

/// One line of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub image: String,
    pub distortion: String,
    pub level: f64,
    pub ber: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub iters: usize,
    pub retries: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub distortion: String,
    pub level: f64,
    pub mean_ber: f64,
    pub std_ber: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub weights_digest: String,
    pub images: usize,
    pub skipped: Vec<String>,
    pub success_rate: f64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Over successful embeds only.
    pub clean_ber: f64,
    pub mean_embed_ms: f64,
    pub mean_extract_ms: f64,
    pub cells: Vec<CellStats>,
    #[serde(skip)]
    pub trials: Vec<TrialRecord>,
}

impl BenchReport {
    pub fn cell(&self, distortion: &str, level: f64) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.distortion == distortion && c.level == level)
    }
}

/// A host image ready for embedding.
#[derive(Debug, Clone)]
pub struct HostImage {
    pub name: String,
    pub image: RgbImage,
}

/// Sorted PNG/JPEG files of `dir`, each square-resized to `size`. Unreadable
/// files are returned separately instead of failing the run.
pub fn load_images(dir: &Path, size: u32, limit: Option<usize>) -> Result<(Vec<HostImage>, Vec<String>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading image directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        if limit.is_some_and(|n| images.len() >= n) {
            break;
        }
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match imaging::load_rgb(&path) {
            Ok(img) => images.push(HostImage { name, image: imaging::square_resize(&img, size) }),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(name);
            }
        }
    }
    Ok((images, skipped))
}

/// Seeds of image `index` under key `seed`: the message stream, the
/// re-embedding stream and the base of the distortion noise seeds.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    derive_seed(&[seed, index as u64])
}

pub fn noise_seed(image_seed: u64, cell: usize, trial: usize) -> u64 {
    derive_seed(&[image_seed, 2, cell as u64, trial as u64])
}

/// Threads for the bench pool: `ASW_THREADS` if set, else rayon's default.
pub fn thread_count() -> usize {
    std::env::var("ASW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

struct ImageOutcome {
    records: Vec<TrialRecord>,
    success: bool,
    psnr: f64,
    ssim: f64,
    embed_ms: f64,
    extract_ms: Vec<f64>,
}

struct RunContext<'a> {
    cfg: &'a DecoderConfig,
    weights: &'a DecoderWeights,
    ec: &'a EmbedConfig,
    cells: &'a [DistortionKind],
    plan: &'a BenchPlan,
}

fn run_image(ctx: &RunContext<'_>, index: usize, host: &HostImage) -> Result<ImageOutcome> {
    let seed = image_seed(ctx.cfg.seed, index);
    let message = WatermarkMessage::random(ctx.cfg.message_len, &mut Philox::with_stream(seed, 0));
    let host_tensor = imaging::to_tensor(&host.image);
    let t0 = Instant::now();
    let res = embed(ctx.cfg, ctx.weights, &host_tensor, &message, ctx.ec, derive_seed(&[seed, 1]))?;
    let embed_ms = ms(t0);
    let ssim = metrics::ssim(&host.image, &res.watermarked)?;
    let timing = |v: f64| if ctx.plan.record_wall_time { v } else { 0.0 };

    let mut extract_ms = Vec::new();
    let mut records = Vec::new();
    let mut record = |distortion: &str, level: f64, marked: &RgbImage, extra_ms: f64| -> Result<()> {
        let t = Instant::now();
        let got = extract(ctx.cfg, ctx.weights, marked)?;
        let e_ms = ms(t);
        extract_ms.push(e_ms);
        records.push(TrialRecord {
            image: host.name.clone(),
            distortion: distortion.to_string(),
            level,
            ber: metrics::ber(&message, &got)?,
            psnr: res.psnr_db,
            ssim,
            iters: res.iterations_used,
            retries: res.retries,
            wall_ms: timing(extra_ms + e_ms),
        });
        Ok(())
    };

    record(CLEAN, 0.0, &res.watermarked, embed_ms)?;
    for (c, kind) in ctx.cells.iter().enumerate() {
        for trial in 0..ctx.plan.trials {
            let spec = DistortionSpec::new(*kind, noise_seed(seed, c, trial));
            let t = Instant::now();
            let distorted = distortion::apply(&res.watermarked, &spec, Some(&host.image))?;
            record(kind.name(), kind.level(), &distorted, ms(t))?;
        }
    }
    Ok(ImageOutcome { records, success: res.success, psnr: res.psnr_db, ssim, embed_ms, extract_ms })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Aggregate per-(distortion, level) statistics from trial records, in
/// first-appearance order. The clean channel is not included.
pub fn aggregate_cells(records: &[TrialRecord]) -> Vec<CellStats> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records.iter().filter(|r| r.distortion != CLEAN) {
        if !keys.iter().any(|(d, l)| *d == r.distortion && *l == r.level) {
            keys.push((r.distortion.clone(), r.level));
        }
    }
    keys.into_iter()
        .map(|(distortion, level)| {
            let bers: Vec<f64> = records
                .iter()
                .filter(|r| r.distortion == distortion && r.level == level)
                .map(|r| r.ber)
                .collect();
            let m = mean(bers.iter().copied());
            let var = mean(bers.iter().map(|b| (b - m).powi(2)));
            CellStats { distortion, level, mean_ber: m, std_ber: var.sqrt(), n: bers.len() }
        })
        .collect()
}

/// Embed every image of the plan, push each watermarked image through the
/// distortion grid and write the per-trial CSV and aggregate JSON if the
/// plan names them.
pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let (images, skipped) = load_images(&plan.image_dir, plan.image_size, plan.max_images)?;
    if images.is_empty() {
        bail!("no readable images in {}", plan.image_dir.display());
    }
    run_bench_on(plan, &images, skipped)
}

/// [`run_bench`] on images already in memory (the plan's `image_dir` is
/// ignored).
pub fn run_bench_on(plan: &BenchPlan, images: &[HostImage], skipped: Vec<String>) -> Result<BenchReport> {
    plan.validate()?;
    let cfg = plan.decoder_config();
    let weights = build_decoder(&cfg)?;
    let ec = plan.embed_config();
    let cells = plan.cells()?;
    let ctx = RunContext { cfg: &cfg, weights: &weights, ec: &ec, cells: &cells, plan };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build()?;
    let outcomes: Vec<Result<ImageOutcome>> =
        pool.install(|| images.par_iter().enumerate().map(|(i, host)| run_image(&ctx, i, host)).collect());
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let timing = |v: f64| if plan.record_wall_time { v } else { 0.0 };
    let trials: Vec<TrialRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
    let n = outcomes.len() as f64;
    let clean: Vec<&TrialRecord> = trials.iter().filter(|r| r.distortion == CLEAN).collect();
    let report = BenchReport {
        weights_digest: weights.digest_hex(),
        images: outcomes.len(),
        skipped,
        success_rate: outcomes.iter().filter(|o| o.success).count() as f64 / n,
        mean_psnr: mean(outcomes.iter().map(|o| o.psnr)),
        mean_ssim: mean(outcomes.iter().map(|o| o.ssim)),
        clean_ber: mean(clean.iter().zip(&outcomes).filter(|(_, o)| o.success).map(|(r, _)| r.ber)),
        mean_embed_ms: timing(mean(outcomes.iter().map(|o| o.embed_ms))),
        mean_extract_ms: timing(mean(outcomes.iter().flat_map(|o| o.extract_ms.iter().copied()))),
        cells: aggregate_cells(&trials),
        trials,
    };
    if let Some(path) = &plan.csv_path {
        write_csv(path, &report.trials)?;
    }
    if let Some(path) = &plan.json_path {
        std::fs::write(path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}

pub fn write_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

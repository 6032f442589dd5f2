use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asw_core::distortion::DistortionKind;
use asw_core::{DecoderConfig, EmbedConfig};
use serde::{Deserialize, Serialize};

/// Decoder architecture and key. Missing fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    pub seed: u64,
    pub depth: usize,
    pub stride: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub head_grid: usize,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        let d = DecoderConfig::default();
        DecoderSettings {
            seed: d.seed,
            depth: d.depth,
            stride: d.pool_stride,
            channels: d.channels,
            kernel_size: d.kernel_size,
            head_grid: d.head_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSettings {
    pub alpha: f64,
    pub iters: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub psnr_floor_db: f64,
    pub max_retries: usize,
}

impl Default for EmbedSettings {
    fn default() -> Self {
        let e = EmbedConfig::default();
        EmbedSettings {
            alpha: e.alpha,
            iters: e.iters,
            eta: e.eta,
            epsilon: e.epsilon,
            psnr_floor_db: e.psnr_floor_db,
            max_retries: e.max_retries,
        }
    }
}

/// One row of the distortion grid: a kind name and the levels to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub kind: String,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPlan {
    pub image_dir: PathBuf,
    /// Images are center-cropped and resized to `image_size` squared.
    pub image_size: u32,
    /// Use at most this many images (sorted by file name).
    pub max_images: Option<usize>,
    pub message_bits: usize,
    pub decoder: DecoderSettings,
    pub embed: EmbedSettings,
    pub distortions: Vec<GridEntry>,
    /// Independent noise draws per (image, distortion, level).
    pub trials: usize,
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
    /// Write measured times into `wall_ms`; with `false` the column is 0 so
    /// the CSV is a pure function of the plan.
    pub record_wall_time: bool,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            image_dir: PathBuf::from("images"),
            image_size: 256,
            max_images: None,
            message_bits: 36,
            decoder: DecoderSettings::default(),
            embed: EmbedSettings::default(),
            distortions: Vec::new(),
            trials: 1,
            csv_path: None,
            json_path: None,
            record_wall_time: true,
        }
    }
}

impl BenchPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: BenchPlan = serde_json::from_str(text).context("malformed bench plan")?;
        plan.validate()?;
        Ok(plan)
    }

    /// Load a plan file. A relative `image_dir` or report path is resolved
    /// against the plan file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut plan = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            rebase(&mut plan.image_dir);
            plan.csv_path.as_mut().map(rebase);
            plan.json_path.as_mut().map(rebase);
        }
        Ok(plan)
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        let d = &self.decoder;
        DecoderConfig {
            seed: d.seed,
            message_len: self.message_bits,
            pool_stride: d.stride,
            depth: d.depth,
            channels: d.channels,
            kernel_size: d.kernel_size,
            head_grid: d.head_grid,
            ..DecoderConfig::default()
        }
    }

    pub fn embed_config(&self) -> EmbedConfig {
        let e = &self.embed;
        EmbedConfig {
            alpha: e.alpha,
            iters: e.iters,
            eta: e.eta,
            epsilon: e.epsilon,
            psnr_floor_db: e.psnr_floor_db,
            max_retries: e.max_retries,
            ..EmbedConfig::default()
        }
    }

    /// The distortion grid flattened into cells, in plan order.
    pub fn cells(&self) -> Result<Vec<DistortionKind>> {
        let mut out = Vec::new();
        for entry in &self.distortions {
            if entry.levels.is_empty() {
                bail!("distortion {:?} has no levels", entry.kind);
            }
            for &level in &entry.levels {
                out.push(DistortionKind::from_name(&entry.kind, level)?);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.decoder_config().feature_extent(self.image_size as usize, self.image_size as usize)?;
        self.embed_config().validate()?;
        if self.trials == 0 {
            bail!("trials must be positive");
        }
        self.cells()?;
        Ok(())
    }
}

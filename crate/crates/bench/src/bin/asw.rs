use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use asw_bench::{run_bench, run_depth_probe, BenchPlan, ProbeOptions};
use asw_core::distortion::{self, DistortionKind, DistortionSpec};
use asw_core::{build_decoder, embed, extract, imaging, metrics, DecoderConfig, EmbedConfig, WatermarkMessage};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asw", version, about = "Training-free image watermarking with a random shallow decoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DecoderArgs {
    /// Decoder key.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Message length in bits.
    #[arg(long, default_value_t = 36)]
    bits: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Front average-pool stride (1, 2, 4 or 8).
    #[arg(long, default_value_t = 4)]
    stride: usize,
}

impl DecoderArgs {
    fn config(&self) -> DecoderConfig {
        DecoderConfig {
            seed: self.seed,
            message_len: self.bits,
            depth: self.depth,
            pool_stride: self.stride,
            ..DecoderConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Embed a message into an image.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Bit string ("0110...") or hex ("0x...").
        #[arg(long)]
        message: String,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        #[arg(long, default_value_t = 25)]
        iters: usize,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, default_value_t = 0.005)]
        epsilon: f64,
        /// Center-crop and resize the input to this square size first.
        #[arg(long)]
        size: Option<u32>,
    },
    /// Print the message decoded from an image.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Apply one benchmark distortion.
    Distort {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// e.g. jpeg, gaussian_blur, gaussian_noise, resize, rotation.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Original image, required by cropout.
        #[arg(long)]
        host: Option<PathBuf>,
    },
    /// Run a JSON bench plan.
    Bench {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Flip rate of random decoders under orthogonal noise, per depth.
    ProbeDepth {
        #[arg(long, value_delimiter = ',', default_value = "3,4,5,6")]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 10.0 / 255.0)]
        sigma: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Front average-pool stride of the probed decoders.
        #[arg(long, default_value_t = 4)]
        stride: usize,
        /// Draw probe images from this folder instead of synthetic textures.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Embed { input, out, message, decoder, alpha, iters, eta, epsilon, size } => {
            let cfg = decoder.config();
            let msg = WatermarkMessage::parse(&message, Some(cfg.message_len))?;
            let mut img = imaging::load_rgb(&input)?;
            if let Some(s) = size {
                img = imaging::square_resize(&img, s);
            }
            let w = build_decoder(&cfg)?;
            let ec = EmbedConfig { alpha, iters, eta, epsilon, ..EmbedConfig::default() };
            let res = embed(&cfg, &w, &imaging::to_tensor(&img), &msg, &ec, cfg.seed)?;
            imaging::save_rgb(&res.watermarked, &out)?;
            println!("message {msg}");
            println!("success {}", res.success);
            println!("psnr {:.2}", res.psnr_db);
            println!("ssim {:.4}", metrics::ssim(&img, &res.watermarked)?);
            println!("iterations {}", res.iterations_used);
            println!("retries {}", res.retries);
            if !res.success {
                anyhow::bail!("embedding did not reach the message; best attempt written to {}", out.display());
            }
        }
        Command::Extract { input, decoder } => {
            let cfg = decoder.config();
            let w = build_decoder(&cfg)?;
            println!("{}", extract(&cfg, &w, &imaging::load_rgb(&input)?)?);
        }
        Command::Distort { input, out, kind, level, noise_seed, host } => {
            let kind = DistortionKind::from_name(&kind, level)?;
            let img = imaging::load_rgb(&input)?;
            let host = host.map(imaging::load_rgb).transpose()?;
            let distorted = distortion::apply(&img, &DistortionSpec::new(kind, noise_seed), host.as_ref())?;
            imaging::save_rgb(&distorted, &out)?;
        }
        Command::Bench { plan } => {
            let plan = BenchPlan::load(&plan)?;
            let report = run_bench(&plan)?;
            println!("weights {}", report.weights_digest);
            println!(
                "images {}  success {:.1}%  psnr {:.2}  ssim {:.4}  clean ber {:.2}%",
                report.images,
                100.0 * report.success_rate,
                report.mean_psnr,
                report.mean_ssim,
                report.clean_ber
            );
            for c in &report.cells {
                println!("{:<16} {:>10} ber {:6.2}% (std {:.2}, n {})", c.distortion, c.level, c.mean_ber, c.std_ber, c.n);
            }
        }
        Command::ProbeDepth { depths, sigma, n, seed, stride, corpus } => {
            let corpus = match corpus {
                Some(dir) => asw_bench::runner::load_images(&dir, 512, None)
                    .with_context(|| format!("loading corpus {}", dir.display()))?
                    .0
                    .into_iter()
                    .map(|h| h.image)
                    .collect(),
                None => Vec::new(),
            };
            let decoder = DecoderConfig { pool_stride: stride, ..DecoderConfig::default() };
            let rows = run_depth_probe(&ProbeOptions { depths, sigma, n_images: n, seed, corpus, decoder, ..ProbeOptions::default() })?;
            println!("depth  flip+    flip-    mean");
            for r in rows {
                println!("{:>5}  {:6.2}%  {:6.2}%  {:6.2}%", r.depth, r.flip_plus, r.flip_minus, r.flip_mean);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

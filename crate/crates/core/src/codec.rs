//! Adversarial embedding against the frozen decoder, and extraction.
//!
//! The host is optimized directly in pixel space:
//!
//! ```text
//! minimize  BCE(SD(I_w), W) + alpha * mean((I_w - I_h)^2)   s.t. I_w in [0, 1]
//! ```
//!
//! with L-BFGS steps each followed by projection onto the pixel box. The
//! result is quantized to 8 bits and decoded again; if the quantized image
//! fails to decode `W` or its PSNR is below the floor, the optimization is
//! restarted from a uniform perturbation of the host within an `epsilon` box.

use image::RgbImage;

use crate::decoder::{self, DecoderConfig, DecoderWeights};
use crate::error::{AswError, Result};
use crate::imaging;
use crate::lbfgs::{LbfgsState, DEFAULT_MEMORY};
use crate::message::WatermarkMessage;
use crate::metrics;
use crate::rng::Philox;
use crate::tensor::Tensor;

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    /// Weight of the fidelity term.
    pub alpha: f64,
    /// Maximum outer iterations per attempt.
    pub iters: usize,
    /// Initial trial step of the first L-BFGS line search.
    pub eta: f64,
    /// Half-width of the uniform restart box around the host.
    pub epsilon: f64,
    pub psnr_floor_db: f64,
    pub max_retries: usize,
    pub conv_tol: f64,
    pub conv_window: usize,
    pub lbfgs_memory: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            alpha: 0.75,
            iters: 25,
            eta: 0.05,
            epsilon: 0.005,
            psnr_floor_db: 33.0,
            max_retries: 5,
            conv_tol: 1e-3,
            conv_window: 3,
            lbfgs_memory: DEFAULT_MEMORY,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AswError::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be finite and >= 0", self.alpha));
        }
        if self.iters == 0 {
            return bad("iters must be positive".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be positive", self.eta));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be >= 0", self.epsilon));
        }
        if !(self.conv_tol > 0.0) {
            return bad(format!("conv_tol {} must be positive", self.conv_tol));
        }
        if self.conv_window < 2 {
            return bad(format!("conv_window {} must be at least 2", self.conv_window));
        }
        if self.lbfgs_memory == 0 {
            return bad("lbfgs_memory must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmbedResult {
    pub watermarked: RgbImage,
    /// The quantized image decodes to the message.
    pub success: bool,
    pub iterations_used: usize,
    /// Restarts performed after the first attempt.
    pub retries: usize,
    pub final_lw: f64,
    pub final_li: f64,
    pub final_lall: f64,
    pub psnr_db: f64,
    /// `L_all` after every outer iteration of the returned attempt, starting
    /// with the value at the initial point.
    pub objective_trace: Vec<f64>,
    /// Outer iterations whose iterate was moved by the box projection.
    pub clip_events: Vec<usize>,
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn watermark_loss(probs: &Tensor, message: &WatermarkMessage) -> Result<f64> {
    if probs.len() != message.len() {
        return Err(AswError::ShapeMismatch(format!(
            "{} probabilities for a {}-bit message",
            probs.len(),
            message.len()
        )));
    }
    let sum: f64 = probs
        .data()
        .iter()
        .zip(message.bits())
        .map(|(&p, &b)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if b == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// [`watermark_loss`] evaluated on logits, `softplus(z) - w z` per bit.
/// Unlike the probability form it needs no clamp, so a saturated wrong bit
/// still contributes a loss linear in its logit and a gradient of `±1/t`.
pub fn watermark_loss_from_logits(logits: &Tensor, message: &WatermarkMessage) -> Result<f64> {
    if logits.len() != message.len() {
        return Err(AswError::ShapeMismatch(format!(
            "{} logits for a {}-bit message",
            logits.len(),
            message.len()
        )));
    }
    let softplus = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
    let sum: f64 = logits
        .data()
        .iter()
        .zip(message.bits())
        .map(|(&z, &b)| {
            if b == 1 {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    Ok(sum / logits.len() as f64)
}

/// Mean squared pixel difference.
pub fn image_loss(marked: &Tensor, host: &Tensor) -> Result<f64> {
    marked.ensure_same_shape(host)?;
    let sum: f64 = marked
        .data()
        .iter()
        .zip(host.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / marked.len() as f64)
}

/// Objective value and gradient at one iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub lw: f64,
    pub li: f64,
    pub value: f64,
    pub grad: Tensor,
    pub decoded: WatermarkMessage,
}

/// The embedding objective for one (decoder, host, message) triple.
pub struct EmbedObjective<'a> {
    cfg: &'a DecoderConfig,
    weights: &'a DecoderWeights,
    host: &'a Tensor,
    message: &'a WatermarkMessage,
    alpha: f64,
}

impl<'a> EmbedObjective<'a> {
    pub fn new(
        cfg: &'a DecoderConfig,
        weights: &'a DecoderWeights,
        host: &'a Tensor,
        message: &'a WatermarkMessage,
        alpha: f64,
    ) -> Self {
        EmbedObjective { cfg, weights, host, message, alpha }
    }

    pub fn evaluate(&self, x: &Tensor) -> Result<Evaluation> {
        let pass = decoder::forward(self.cfg, self.weights, x)?;
        let lw = watermark_loss_from_logits(&pass.logits, self.message)?;
        let li = image_loss(x, self.host)?;
        let t = self.message.len() as f64;
        // d BCE / d logit = (p - w) / t, taken on the logits to avoid the
        // 0/0 of a saturated sigmoid.
        let dlogits: Vec<f64> = pass
            .probs
            .data()
            .iter()
            .zip(self.message.bits())
            .map(|(&p, &b)| (p - f64::from(b)) / t)
            .collect();
        let mut grad = pass.tape.backward_from_logits(&Tensor::new(&[dlogits.len()], dlogits)?)?;
        let scale = 2.0 * self.alpha / x.len() as f64;
        for ((g, a), h) in grad.data_mut().iter_mut().zip(x.data()).zip(self.host.data()) {
            *g += scale * (a - h);
        }
        Ok(Evaluation {
            lw,
            li,
            value: lw + self.alpha * li,
            grad,
            decoded: decoder::threshold(&pass.probs),
        })
    }
}

/// `|L(i) - L(i-j)| / max(L(i-j), 1e-8) < tol` for every lag `j` up to
/// `window` that the trace covers. Needs at least one completed step.
pub fn has_converged(trace: &[f64], window: usize, tol: f64) -> bool {
    let Some((&last, earlier)) = trace.split_last() else {
        return false;
    };
    if earlier.is_empty() {
        return false;
    }
    earlier
        .iter()
        .rev()
        .take(window)
        .all(|&prev| (last - prev).abs() / prev.max(1e-8) < tol)
}

struct Attempt {
    image: RgbImage,
    success: bool,
    psnr_db: f64,
    iterations: usize,
    eval: Evaluation,
    trace: Vec<f64>,
    clip_events: Vec<usize>,
}

fn run_attempt(objective: &EmbedObjective<'_>, start: Tensor, host_8bit: &RgbImage, ec: &EmbedConfig) -> Result<Attempt> {
    let mut state = LbfgsState::new(ec.lbfgs_memory);
    let mut x = start;
    let mut eval = objective.evaluate(&x)?;
    let mut trace = vec![eval.value];
    let mut clip_events = Vec::new();
    let mut iterations = 0;

    for i in 1..=ec.iters {
        let mut last_eval: Option<Evaluation> = None;
        let out = state.step(&x, eval.value, &eval.grad, ec.eta, |cand| {
            let e = objective.evaluate(cand)?;
            let res = (e.value, e.grad.clone());
            last_eval = Some(e);
            Ok(res)
        })?;
        iterations = i;
        if !out.accepted {
            break;
        }
        x = out.x;
        if imaging::clip_unit(&mut x) {
            clip_events.push(i);
            eval = objective.evaluate(&x)?;
        } else {
            eval = last_eval.expect("accepted step was evaluated");
        }
        trace.push(eval.value);
        if eval.decoded == *objective.message && has_converged(&trace, ec.conv_window, ec.conv_tol) {
            break;
        }
    }

    let image = imaging::from_tensor(&x)?;
    let decoded = decoder::extract_message(objective.cfg, objective.weights, &imaging::to_tensor(&image))?;
    Ok(Attempt {
        success: decoded == *objective.message,
        psnr_db: metrics::psnr(host_8bit, &image)?,
        image,
        iterations,
        eval,
        trace,
        clip_events,
    })
}

/// Embed `message` into `host` (a `[3, H, W]` tensor in `[0, 1]`).
///
/// Never fails on valid inputs: if every attempt misses, the best attempt is
/// returned with `success == false`.
pub fn embed(
    cfg: &DecoderConfig,
    weights: &DecoderWeights,
    host: &Tensor,
    message: &WatermarkMessage,
    ec: &EmbedConfig,
    rng_seed: u64,
) -> Result<EmbedResult> {
    ec.validate()?;
    let (_, h, w) = host.chw()?;
    cfg.feature_extent(h, w)?;
    if message.len() != cfg.message_len {
        return Err(AswError::InvalidMessage(format!(
            "message has {} bits, decoder emits {}",
            message.len(),
            cfg.message_len
        )));
    }
    if host.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AswError::InvalidDimension("host pixels must lie in [0, 1]".into()));
    }

    let host_8bit = imaging::from_tensor(host)?;
    let objective = EmbedObjective::new(cfg, weights, host, message, ec.alpha);
    let mut rng = Philox::new(rng_seed);
    let mut best: Option<Attempt> = None;
    let mut retries = 0;

    for retry in 0..=ec.max_retries {
        retries = retry;
        let start = if retry == 0 {
            host.clone()
        } else {
            let mut s = host.clone();
            for v in s.data_mut() {
                *v += ec.epsilon * rng.uniform(-1.0, 1.0);
            }
            imaging::clip_unit(&mut s);
            s
        };
        let attempt = run_attempt(&objective, start, &host_8bit, ec)?;
        let good = attempt.success && attempt.psnr_db >= ec.psnr_floor_db;
        let better = match &best {
            None => true,
            Some(b) => (attempt.success, attempt.psnr_db) > (b.success, b.psnr_db),
        };
        if better {
            best = Some(attempt);
        }
        if good {
            break;
        }
    }

    let a = best.expect("at least one attempt");
    Ok(EmbedResult {
        watermarked: a.image,
        success: a.success,
        iterations_used: a.iterations,
        retries,
        final_lw: a.eval.lw,
        final_li: a.eval.li,
        final_lall: a.eval.value,
        psnr_db: a.psnr_db,
        objective_trace: a.trace,
        clip_events: a.clip_events,
    })
}

/// Decode the message carried by an 8-bit image.
pub fn extract(cfg: &DecoderConfig, weights: &DecoderWeights, image: &RgbImage) -> Result<WatermarkMessage> {
    decoder::extract_message(cfg, weights, &imaging::to_tensor(image))
}

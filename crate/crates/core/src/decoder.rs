//! The frozen, seeded shallow decoder.
//!
//! Pipeline for an image `[3, H, W]`:
//!
//! ```text
//! AvgPool(s) -> [Conv(k, stride 2) -> IN -> LeakyReLU] x 2
//!            -> [Conv(k, stride 1) -> IN -> LeakyReLU] x (d - 3)
//!            -> [Conv(k, stride 2) -> IN -> LeakyReLU]
//!            -> AdaptiveAvgPool(g x g) -> FC(C g^2 -> t) -> sigmoid
//! ```
//!
//! Every parameter is an i.i.d. standard normal draw from a Philox stream keyed
//! by the seed, consumed in canonical order: conv kernels front to back, then
//! the FC weight, then the FC bias, each tensor in row-major order.

use sha2::{Digest, Sha256};

use crate::error::{AswError, Result};
use crate::message::WatermarkMessage;
use crate::ops;
use crate::rng::Philox;
use crate::tape::{LayerTape, TapeRecord};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Key κ; the decoder weights are a pure function of it.
    pub seed: u64,
    pub message_len: usize,
    pub pool_stride: usize,
    pub depth: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub leaky_slope: f64,
    pub in_eps: f64,
    /// Output grid of the adaptive pool feeding the FC layer. With `1` the
    /// pool is global and the FC sees only per-channel means of normalized
    /// activations, which barely depend on the image.
    pub head_grid: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            seed: 1,
            message_len: 36,
            pool_stride: 4,
            depth: 3,
            channels: 64,
            kernel_size: 3,
            leaky_slope: 0.2,
            in_eps: 1e-5,
            head_grid: 4,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AswError::InvalidConfig(m));
        if self.seed == 0 {
            return bad("seed must be a positive integer".into());
        }
        if self.message_len == 0 {
            return bad("message length must be positive".into());
        }
        if ![1, 2, 4, 8].contains(&self.pool_stride) {
            return bad(format!("pool stride {} not in {{1, 2, 4, 8}}", self.pool_stride));
        }
        if self.depth < 3 {
            return bad(format!("depth {} must be at least 3", self.depth));
        }
        if self.channels == 0 {
            return bad("channel count must be positive".into());
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel_size));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky slope {} must lie in (0, 1)", self.leaky_slope));
        }
        if !(self.in_eps > 0.0) {
            return bad(format!("instance-norm eps {} must be positive", self.in_eps));
        }
        if self.head_grid == 0 {
            return bad("head pooling grid must be positive".into());
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        self.kernel_size / 2
    }

    /// Stride of each conv layer, front to back.
    pub fn conv_strides(&self) -> Vec<usize> {
        let mut s = vec![2, 2];
        s.extend(std::iter::repeat(1).take(self.depth - 3));
        s.push(2);
        s
    }

    /// Spatial extent after the last conv for an `h × w` input, checking every
    /// constraint along the way.
    pub fn feature_extent(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if h % self.pool_stride != 0 || w % self.pool_stride != 0 {
            return Err(AswError::ShapeMismatch(format!(
                "image {h}x{w} not divisible by pool stride {}",
                self.pool_stride
            )));
        }
        let (mut fh, mut fw) = (h / self.pool_stride, w / self.pool_stride);
        for stride in self.conv_strides() {
            let k = self.kernel_size;
            match (
                ops::conv_out_extent(fh, k, stride, self.pad()),
                ops::conv_out_extent(fw, k, stride, self.pad()),
            ) {
                (Some(a), Some(b)) if a * b >= 2 => (fh, fw) = (a, b),
                _ => {
                    return Err(AswError::InvalidDimension(format!(
                        "image {h}x{w} is too small for depth {} with pool stride {}",
                        self.depth, self.pool_stride
                    )))
                }
            }
        }
        Ok((fh, fw))
    }

    /// Shapes of every parameter tensor in canonical order.
    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        let (c, k) = (self.channels, self.kernel_size);
        let mut shapes = Vec::with_capacity(self.depth + 2);
        for layer in 0..self.depth {
            let cin = if layer == 0 { 3 } else { c };
            shapes.push(vec![c, cin, k, k]);
        }
        shapes.push(vec![self.message_len, c * self.head_grid * self.head_grid]);
        shapes.push(vec![self.message_len]);
        shapes
    }
}

#[derive(Debug, Clone)]
pub struct DecoderWeights {
    pub conv_kernels: Vec<Tensor>,
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    digest: [u8; 32],
}

impl DecoderWeights {
    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }

    /// All parameters flattened in canonical order.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.conv_kernels
            .iter()
            .chain([&self.fc_weight, &self.fc_bias])
            .flat_map(|t| t.data().iter().copied())
    }
}

fn digest_tensors<'a>(tensors: impl Iterator<Item = &'a Tensor>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for t in tensors {
        hasher.update((t.shape().len() as u64).to_le_bytes());
        for &d in t.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.finalize().into()
}

pub fn build_decoder(cfg: &DecoderConfig) -> Result<DecoderWeights> {
    cfg.validate()?;
    let mut rng = Philox::new(cfg.seed);
    let mut tensors: Vec<Tensor> = cfg
        .parameter_shapes()
        .iter()
        .map(|shape| Tensor::from_fn(shape, |_| rng.gaussian()))
        .collect();
    let digest = digest_tensors(tensors.iter());
    let fc_bias = tensors.pop().expect("bias");
    let fc_weight = tensors.pop().expect("fc weight");
    Ok(DecoderWeights {
        conv_kernels: tensors,
        fc_weight,
        fc_bias,
        digest,
    })
}

/// Output of one decoder forward pass.
#[derive(Debug)]
pub struct DecoderPass<'w> {
    pub logits: Tensor,
    pub probs: Tensor,
    pub tape: LayerTape<'w>,
}

fn check_weights(cfg: &DecoderConfig, w: &DecoderWeights) -> Result<()> {
    let shapes = cfg.parameter_shapes();
    let actual: Vec<&[usize]> = w
        .conv_kernels
        .iter()
        .chain([&w.fc_weight, &w.fc_bias])
        .map(Tensor::shape)
        .collect();
    if actual.len() != shapes.len() || actual.iter().zip(&shapes).any(|(a, b)| *a != b.as_slice()) {
        return Err(AswError::ShapeMismatch("decoder weights do not match config".into()));
    }
    Ok(())
}

pub fn forward<'w>(cfg: &DecoderConfig, w: &'w DecoderWeights, image: &Tensor) -> Result<DecoderPass<'w>> {
    let (c, h, wd) = image.chw()?;
    if c != 3 {
        return Err(AswError::ShapeMismatch(format!("expected 3 channels, got {c}")));
    }
    cfg.feature_extent(h, wd)?;
    check_weights(cfg, w)?;

    let mut tape = LayerTape::new(image.shape());
    let mut x = ops::avg_pool2d(image, cfg.pool_stride)?;
    tape.push(TapeRecord::AvgPool { stride: cfg.pool_stride }, x.shape());

    for (kernel, stride) in w.conv_kernels.iter().zip(cfg.conv_strides()) {
        let in_shape = x.chw()?;
        x = ops::conv2d(&x, kernel, stride, cfg.pad())?;
        tape.push(TapeRecord::Conv { weight: kernel, in_shape, stride, pad: cfg.pad() }, x.shape());

        let cache = ops::instance_norm_cached(&x, cfg.in_eps)?;
        x = ops::leaky_relu(&cache.normalized, cfg.leaky_slope);
        let shape = x.shape().to_vec();
        tape.push(TapeRecord::InstanceNorm(cache.clone()), &shape);
        tape.push(TapeRecord::LeakyRelu { input: cache.normalized, slope: cfg.leaky_slope }, &shape);
    }

    let in_shape = x.chw()?;
    let pooled = ops::adaptive_avg_pool(&x, cfg.head_grid)?;
    tape.push(TapeRecord::AdaptivePool { in_shape, grid: cfg.head_grid }, pooled.shape());
    let logits = ops::fully_connected(&pooled, &w.fc_weight, &w.fc_bias)?;
    tape.push(TapeRecord::FullyConnected { weight: &w.fc_weight }, logits.shape());
    let probs = ops::sigmoid(&logits);
    tape.push(TapeRecord::Sigmoid { output: probs.clone() }, probs.shape());

    Ok(DecoderPass { logits, probs, tape })
}

/// Hard decision `H(p - 0.5)`: a probability of exactly one half decodes as 1.
pub fn threshold(probs: &Tensor) -> WatermarkMessage {
    let bits = probs.data().iter().map(|&p| u8::from(p >= 0.5)).collect();
    WatermarkMessage::new(bits).expect("non-empty binary message")
}

pub fn extract_message(cfg: &DecoderConfig, w: &DecoderWeights, image: &Tensor) -> Result<WatermarkMessage> {
    Ok(threshold(&forward(cfg, w, image)?.probs))
}

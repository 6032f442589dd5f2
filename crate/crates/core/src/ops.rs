//! Forward kernels and input-gradient kernels for the decoder's layer set.
//!
//! All image-like tensors are `[C, H, W]`. Weights never receive gradients;
//! every `*_backward` returns the cotangent of the layer input only.

use crate::error::{AswError, Result};
use crate::tensor::Tensor;

pub fn avg_pool2d(x: &Tensor, stride: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if stride == 0 {
        return Err(AswError::InvalidDimension("pool stride must be >= 1".into()));
    }
    if h % stride != 0 || w % stride != 0 {
        return Err(AswError::ShapeMismatch(format!(
            "{h}x{w} is not divisible by pool stride {stride}"
        )));
    }
    if stride == 1 {
        return Ok(x.clone());
    }
    let (ho, wo) = (h / stride, w / stride);
    let inv = 1.0 / (stride * stride) as f64;
    let src = x.data();
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            let drow = &mut dst[(y / stride) * wo..(y / stride + 1) * wo];
            for (ox, chunk) in row.chunks_exact(stride).enumerate() {
                drow[ox] += chunk.iter().sum::<f64>();
            }
        }
        dst.iter_mut().for_each(|v| *v *= inv);
    }
    Tensor::new(&[c, ho, wo], out)
}

pub fn avg_pool2d_backward(grad: &Tensor, stride: usize) -> Result<Tensor> {
    let (c, ho, wo) = grad.chw()?;
    if stride == 1 {
        return Ok(grad.clone());
    }
    let (h, w) = (ho * stride, wo * stride);
    let inv = 1.0 / (stride * stride) as f64;
    let g = grad.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let grow = &g[ch * ho * wo + (y / stride) * wo..][..wo];
            let orow = &mut out[ch * h * w + y * w..][..w];
            for (x, v) in orow.iter_mut().enumerate() {
                *v = grow[x / stride] * inv;
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// Output spatial extent of a strided, zero-padded convolution.
pub fn conv_out_extent(extent: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = extent + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new(in_shape: (usize, usize, usize), w: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        let (cin, h, wd) = in_shape;
        let [cout, wcin, kh, kw] = w.shape()[..] else {
            return Err(AswError::ShapeMismatch(format!(
                "conv weight must be [Cout, Cin, k, k], got {:?}",
                w.shape()
            )));
        };
        if wcin != cin || kh != kw {
            return Err(AswError::ShapeMismatch(format!(
                "conv weight {:?} incompatible with {cin} input channels",
                w.shape()
            )));
        }
        if kh % 2 == 0 {
            return Err(AswError::InvalidDimension(format!("kernel size {kh} must be odd")));
        }
        let (ho, wo) = match (
            conv_out_extent(h, kh, stride, pad),
            conv_out_extent(wd, kh, stride, pad),
        ) {
            (Some(a), Some(b)) if a >= 1 && b >= 1 => (a, b),
            _ => {
                return Err(AswError::InvalidDimension(format!(
                    "conv k={kh} stride={stride} pad={pad} leaves no output for {h}x{wd}"
                )))
            }
        };
        Ok(ConvGeom { cin, h, w: wd, cout, k: kh, stride, pad, ho, wo })
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Input x-range `[lo, hi)` of output columns whose tap `kx` lands inside the image.
    fn valid_out_range(&self, kx: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        // ix = ox * stride + kx - pad must lie in [0, extent)
        let lo = if kx >= self.pad { 0 } else { (self.pad - kx).div_ceil(self.stride) };
        let hi_num = extent + self.pad;
        let hi = if hi_num > kx { (hi_num - kx - 1) / self.stride + 1 } else { 0 };
        (lo.min(out_extent), hi.min(out_extent))
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (ncol, k) = (self.cols(), self.k);
        let mut cols = vec![0.0; self.rows() * ncol];
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                let (oy0, oy1) = self.valid_out_range(ky, self.h, self.ho);
                for kx in 0..k {
                    let (ox0, ox1) = self.valid_out_range(kx, self.w, self.wo);
                    let row = &mut cols[((c * k + ky) * k + kx) * ncol..][..ncol];
                    for oy in oy0..oy1 {
                        let iy = oy * self.stride + ky - self.pad;
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        for ox in ox0..ox1 {
                            dst[ox] = src[ox * self.stride + kx - self.pad];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (ncol, k) = (self.cols(), self.k);
        let mut x = vec![0.0; self.cin * self.h * self.w];
        for c in 0..self.cin {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..k {
                let (oy0, oy1) = self.valid_out_range(ky, self.h, self.ho);
                for kx in 0..k {
                    let (ox0, ox1) = self.valid_out_range(kx, self.w, self.wo);
                    let row = &cols[((c * k + ky) * k + kx) * ncol..][..ncol];
                    for oy in oy0..oy1 {
                        let iy = oy * self.stride + ky - self.pad;
                        let src = &row[oy * self.wo..(oy + 1) * self.wo];
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for ox in ox0..ox1 {
                            dst[ox * self.stride + kx - self.pad] += src[ox];
                        }
                    }
                }
            }
        }
        x
    }
}

/// Row-major `c = a · b` for `a: m×k`, `b: k×n`, optionally with `a` transposed
/// (then `a` is stored `k×m`).
fn gemm(a: &[f64], a_transposed: bool, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    // SAFETY: slice lengths match the m/k/n extents and strides given.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// Cross-correlation with zero padding and no bias.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = ConvGeom::new(x.chw()?, w, stride, pad)?;
    let cols = g.im2col(x.data());
    let out = gemm(w.data(), false, &cols, g.cout, g.rows(), g.cols());
    Tensor::new(&[g.cout, g.ho, g.wo], out)
}

pub fn conv2d_backward(
    grad: &Tensor,
    w: &Tensor,
    in_shape: (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = ConvGeom::new(in_shape, w, stride, pad)?;
    if grad.shape() != [g.cout, g.ho, g.wo] {
        return Err(AswError::ShapeMismatch(format!(
            "conv cotangent {:?}, expected [{}, {}, {}]",
            grad.shape(),
            g.cout,
            g.ho,
            g.wo
        )));
    }
    let dcols = gemm(w.data(), true, grad.data(), g.rows(), g.cout, g.cols());
    Tensor::new(&[g.cin, g.h, g.w], g.col2im(&dcols))
}

/// Saved per-channel statistics of an instance-norm forward pass.
#[derive(Debug, Clone)]
pub struct InstanceNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

/// Per-channel normalization without affine parameters.
pub fn instance_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    Ok(instance_norm_cached(x, eps)?.normalized)
}

pub fn instance_norm_cached(x: &Tensor, eps: f64) -> Result<InstanceNormCache> {
    let (c, h, w) = x.chw()?;
    let hw = h * w;
    if hw < 2 {
        return Err(AswError::InvalidDimension(format!(
            "instance norm needs at least 2 positions per channel, got {h}x{w}"
        )));
    }
    let mut out = vec![0.0; c * hw];
    let mut inv_std = Vec::with_capacity(c);
    for (src, dst) in x.data().chunks_exact(hw).zip(out.chunks_exact_mut(hw)) {
        let mean = src.iter().sum::<f64>() / hw as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let is = 1.0 / (var + eps).sqrt();
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - mean) * is;
        }
        inv_std.push(is);
    }
    Ok(InstanceNormCache {
        normalized: Tensor::new(&[c, h, w], out)?,
        inv_std,
    })
}

pub fn instance_norm_backward(grad: &Tensor, cache: &InstanceNormCache) -> Result<Tensor> {
    grad.ensure_same_shape(&cache.normalized)?;
    let (c, h, w) = grad.chw()?;
    let hw = h * w;
    let n = hw as f64;
    let mut out = vec![0.0; c * hw];
    for ch in 0..c {
        let dy = &grad.data()[ch * hw..(ch + 1) * hw];
        let y = &cache.normalized.data()[ch * hw..(ch + 1) * hw];
        let mean_dy = dy.iter().sum::<f64>() / n;
        let mean_dy_y = dy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
        let is = cache.inv_std[ch];
        for ((o, &d), &yy) in out[ch * hw..(ch + 1) * hw].iter_mut().zip(dy).zip(y) {
            *o = is * (d - mean_dy - yy * mean_dy_y);
        }
    }
    Tensor::new(&[c, h, w], out)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(grad: &Tensor, input: &Tensor, slope: f64) -> Result<Tensor> {
    grad.ensure_same_shape(input)?;
    let data = grad
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { slope * g })
        .collect();
    Tensor::new(grad.shape(), data)
}

fn adaptive_bins(n: usize, g: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..g).map(move |i| ((i * n) / g, ((i + 1) * n).div_ceil(g)))
}

/// Adaptive average pooling to a `grid × grid` map, flattened channel-major
/// into a vector of length `c · grid²`. Bin `i` of an axis of length `n`
/// covers `[floor(i n / g), ceil((i + 1) n / g))`, so bins may overlap when
/// `n` is not a multiple of `g`. `grid = 1` is global average pooling.
pub fn adaptive_avg_pool(x: &Tensor, grid: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if grid == 0 {
        return Err(AswError::InvalidDimension("pooling grid must be positive".into()));
    }
    let mut out = Vec::with_capacity(c * grid * grid);
    for ch in x.data().chunks_exact(h * w) {
        for (y0, y1) in adaptive_bins(h, grid) {
            for (x0, x1) in adaptive_bins(w, grid) {
                let mut sum = 0.0;
                for y in y0..y1 {
                    sum += ch[y * w + x0..y * w + x1].iter().sum::<f64>();
                }
                out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Tensor::new(&[c * grid * grid], out)
}

pub fn adaptive_avg_pool_backward(grad: &Tensor, in_shape: (usize, usize, usize), grid: usize) -> Result<Tensor> {
    let (c, h, w) = in_shape;
    if grad.shape() != [c * grid * grid] {
        return Err(AswError::ShapeMismatch(format!(
            "pooled cotangent {:?}, expected [{}]",
            grad.shape(),
            c * grid * grid
        )));
    }
    let mut out = vec![0.0; c * h * w];
    let mut g = grad.data().iter();
    for ch in out.chunks_exact_mut(h * w) {
        for (y0, y1) in adaptive_bins(h, grid) {
            for (x0, x1) in adaptive_bins(w, grid) {
                let share = g.next().expect("length checked") / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for v in &mut ch[y * w + x0..y * w + x1] {
                        *v += share;
                    }
                }
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}

/// `w · v + b`.
pub fn fully_connected(v: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [t, c] = w.shape()[..] else {
        return Err(AswError::ShapeMismatch(format!("fc weight must be 2-D, got {:?}", w.shape())));
    };
    if v.shape() != [c] || b.shape() != [t] {
        return Err(AswError::ShapeMismatch(format!(
            "fc weight {:?}, input {:?}, bias {:?}",
            w.shape(),
            v.shape(),
            b.shape()
        )));
    }
    let data = w
        .data()
        .chunks_exact(c)
        .zip(b.data())
        .map(|(row, bias)| row.iter().zip(v.data()).map(|(a, x)| a * x).sum::<f64>() + bias)
        .collect();
    Tensor::new(&[t], data)
}

pub fn fully_connected_backward(grad: &Tensor, w: &Tensor) -> Result<Tensor> {
    let [t, c] = w.shape()[..] else {
        return Err(AswError::ShapeMismatch(format!("fc weight must be 2-D, got {:?}", w.shape())));
    };
    if grad.shape() != [t] {
        return Err(AswError::ShapeMismatch(format!(
            "fc cotangent {:?}, expected [{t}]",
            grad.shape()
        )));
    }
    let mut out = vec![0.0; c];
    for (row, &g) in w.data().chunks_exact(c).zip(grad.data()) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * g;
        }
    }
    Tensor::new(&[c], out)
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(z: &Tensor) -> Tensor {
    z.map(sigmoid_scalar)
}

pub fn sigmoid_backward(grad: &Tensor, output: &Tensor) -> Result<Tensor> {
    grad.ensure_same_shape(output)?;
    let data = grad
        .data()
        .iter()
        .zip(output.data())
        .map(|(g, p)| g * p * (1.0 - p))
        .collect();
    Tensor::new(grad.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Philox;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = Philox::new(seed);
        Tensor::from_fn(shape, |_| r.uniform(-1.0, 1.0))
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() <= tol * scale, "index {i}: {x} vs {y}");
        }
    }

    #[test]
    fn pool_stride_one_is_identity() {
        let x = random(&[3, 6, 10], 1);
        assert_eq!(avg_pool2d(&x, 1).unwrap(), x);
    }

    #[test]
    fn pool_two_by_two_mean() {
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(avg_pool2d(&x, 2).unwrap().data(), &[4.0]);
    }

    #[test]
    fn pool_matches_window_loop() {
        let x = random(&[3, 256, 256], 2);
        let s = 4;
        let got = avg_pool2d(&x, s).unwrap();
        assert_eq!(got.shape(), &[3, 64, 64]);
        let mut want = vec![0.0; 3 * 64 * 64];
        for c in 0..3 {
            for oy in 0..64 {
                for ox in 0..64 {
                    let mut acc = 0.0;
                    for dy in 0..s {
                        for dx in 0..s {
                            acc += x.data()[c * 65536 + (oy * s + dy) * 256 + ox * s + dx];
                        }
                    }
                    want[c * 4096 + oy * 64 + ox] = acc / 16.0;
                }
            }
        }
        close(got.data(), &want, 1e-10);
    }

    #[test]
    fn pool_rejects_indivisible() {
        assert!(matches!(
            avg_pool2d(&Tensor::zeros(&[1, 5, 4]), 2),
            Err(AswError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn pools_compose_multiplicatively() {
        let x = random(&[2, 24, 16], 3);
        let two_step = avg_pool2d(&avg_pool2d(&x, 2).unwrap(), 4).unwrap();
        let one_step = avg_pool2d(&x, 8).unwrap();
        close(two_step.data(), one_step.data(), 1e-12);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = random(&[1, 5, 7], 4);
        let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &w, 1, 0).unwrap(), x);
    }

    #[test]
    fn conv_all_ones_window_sums() {
        let x = Tensor::filled(&[1, 4, 4], 1.0);
        let w = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, 1, 1).unwrap();
        #[rustfmt::skip]
        let want = [
            4.0, 6.0, 6.0, 4.0,
            6.0, 9.0, 9.0, 6.0,
            6.0, 9.0, 9.0, 6.0,
            4.0, 6.0, 6.0, 4.0,
        ];
        assert_eq!(y.data(), &want);
    }

    fn naive_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (cin, h, wd) = x.chw().unwrap();
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; cout * ho * wo];
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[(ci * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((co * cin + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let x = random(&[3, 32, 32], 5);
        let w = random(&[8, 3, 3, 3], 6);
        for (stride, pad) in [(1, 1), (2, 1), (2, 0), (3, 2)] {
            let got = conv2d(&x, &w, stride, pad).unwrap();
            close(got.data(), &naive_conv(&x, &w, stride, pad), 1e-10);
        }
        let w5 = random(&[4, 3, 5, 5], 7);
        let got = conv2d(&x, &w5, 2, 2).unwrap();
        close(got.data(), &naive_conv(&x, &w5, 2, 2), 1e-10);
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> == <x, conv_backward(g)> for any x, g.
        let x = random(&[3, 9, 11], 8);
        let w = random(&[5, 3, 3, 3], 9);
        for (stride, pad) in [(1, 1), (2, 1), (2, 0)] {
            let y = conv2d(&x, &w, stride, pad).unwrap();
            let g = random(y.shape(), 10);
            let gx = conv2d_backward(&g, &w, (3, 9, 11), stride, pad).unwrap();
            let lhs = y.dot(&g);
            let rhs = x.dot(&gx);
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn conv_rejects_empty_output() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(matches!(conv2d(&x, &w, 1, 0), Err(AswError::InvalidDimension(_))));
    }

    #[test]
    fn instance_norm_constant_channel_is_zero() {
        let x = Tensor::filled(&[2, 3, 3], 5.0);
        assert!(instance_norm(&x, 1e-5).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_norm_two_points() {
        let x = Tensor::new(&[1, 1, 2], vec![0.0, 2.0]).unwrap();
        assert_eq!(instance_norm(&x, 0.0).unwrap().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn instance_norm_statistics() {
        let x = random(&[16, 8, 8], 11);
        let y = instance_norm(&x, 1e-5).unwrap();
        for (xc, yc) in x.data().chunks(64).zip(y.data().chunks(64)) {
            let mx = xc.iter().sum::<f64>() / 64.0;
            let vx = xc.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 64.0;
            let my = yc.iter().sum::<f64>() / 64.0;
            let vy = yc.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 64.0;
            assert!(my.abs() < 1e-9);
            assert!((vy - vx / (vx + 1e-5)).abs() < 1e-9);
            assert!((vy - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn instance_norm_rejects_single_position() {
        assert!(instance_norm(&Tensor::zeros(&[4, 1, 1]), 1e-5).is_err());
    }

    #[test]
    fn leaky_relu_cases() {
        let x = Tensor::new(&[3], vec![3.0, -1.0, 0.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.2).data(), &[3.0, -0.2, 0.0]);
    }

    #[test]
    fn global_pool_means() {
        let x = Tensor::new(&[1, 1, 1], vec![7.0]).unwrap();
        assert_eq!(adaptive_avg_pool(&x, 1).unwrap().data(), &[7.0]);
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(adaptive_avg_pool(&x, 1).unwrap().data(), &[3.0]);
        let x = random(&[32, 7, 7], 12);
        let got = adaptive_avg_pool(&x, 1).unwrap();
        for c in 0..32 {
            let mut acc = 0.0;
            for i in 0..49 {
                acc += x.data()[c * 49 + i];
            }
            assert!((got.data()[c] - acc / 49.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_pool_uses_overlapping_bins() {
        // 5 wide into 2 bins: [0, 3) and [2, 5).
        let x = Tensor::from_fn(&[1, 5, 5], |i| i as f64);
        let got = adaptive_avg_pool(&x, 2).unwrap();
        let naive = |ys: std::ops::Range<usize>, xs: std::ops::Range<usize>| {
            let mut acc = 0.0;
            let mut n = 0.0;
            for y in ys {
                for x in xs.clone() {
                    acc += (y * 5 + x) as f64;
                    n += 1.0;
                }
            }
            acc / n
        };
        assert_eq!(got.data(), &[naive(0..3, 0..3), naive(0..3, 2..5), naive(2..5, 0..3), naive(2..5, 2..5)]);
        let x = Tensor::from_fn(&[2, 8, 8], |i| (i % 8) as f64 + (i / 64) as f64 * 100.0);
        let got = adaptive_avg_pool(&x, 4).unwrap();
        assert_eq!(got.shape(), &[32]);
        assert_eq!(&got.data()[..4], &[0.5, 2.5, 4.5, 6.5]);
        assert_eq!(got.data()[16], 100.5);
    }

    #[test]
    fn grid_pool_backward_is_adjoint() {
        for (shape, grid) in [((3, 8, 8), 4), ((2, 5, 7), 3), ((1, 2, 2), 4), ((4, 6, 6), 1)] {
            let x = random(&[shape.0, shape.1, shape.2], 21);
            let y = adaptive_avg_pool(&x, grid).unwrap();
            let g = random(y.shape(), 22);
            let back = adaptive_avg_pool_backward(&g, shape, grid).unwrap();
            assert!((y.dot(&g) - x.dot(&back)).abs() < 1e-10);
        }
        assert!(adaptive_avg_pool_backward(&Tensor::zeros(&[3]), (1, 4, 4), 2).is_err());
    }

    #[test]
    fn fc_cases() {
        let v = Tensor::new(&[2], vec![1.0, 1.0]).unwrap();
        let w = Tensor::new(&[1, 2], vec![2.0, 3.0]).unwrap();
        let b = Tensor::new(&[1], vec![1.0]).unwrap();
        assert_eq!(fully_connected(&v, &w, &b).unwrap().data(), &[6.0]);

        let v = random(&[3], 13);
        let eye = Tensor::new(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(fully_connected(&v, &eye, &Tensor::zeros(&[3])).unwrap(), v);

        let v = random(&[64], 14);
        let w = random(&[36, 64], 15);
        let b = random(&[36], 16);
        let got = fully_connected(&v, &w, &b).unwrap();
        for r in 0..36 {
            let mut acc = b.data()[r];
            for c in 0..64 {
                acc += w.data()[r * 64 + c] * v.data()[c];
            }
            assert!((got.data()[r] - acc).abs() < 1e-12);
        }
        assert!(fully_connected(&random(&[5], 1), &w, &b).is_err());
    }

    #[test]
    fn sigmoid_cases() {
        let z = Tensor::new(&[3], vec![0.0, 1000.0, -1000.0]).unwrap();
        let p = sigmoid(&z);
        assert_eq!(p.data(), &[0.5, 1.0, 0.0]);
        for v in [-30.0, -2.5, 0.1, 7.0, 700.0] {
            assert!((sigmoid_scalar(v) + sigmoid_scalar(-v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ops_stay_finite_on_large_inputs() {
        let mut r = Philox::new(17);
        let x = Tensor::from_fn(&[3, 16, 16], |_| r.uniform(-1e3, 1e3));
        let w = random(&[4, 3, 3, 3], 18);
        let y = conv2d(&x, &w, 2, 1).unwrap();
        assert!(y.is_finite());
        let n = instance_norm(&y, 1e-5).unwrap();
        assert!(n.is_finite());
        assert!(leaky_relu(&n, 0.2).is_finite());
        assert!(avg_pool2d(&x, 4).unwrap().is_finite());
        assert!(sigmoid(&x.clone().reshape(&[768]).unwrap()).is_finite());
    }
}

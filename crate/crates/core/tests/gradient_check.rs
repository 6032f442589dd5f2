//! Analytic input gradients versus central finite differences.

use asw_core::codec::EmbedObjective;
use asw_core::decoder::{self, build_decoder, DecoderConfig};
use asw_core::ops;
use asw_core::rng::Philox;
use asw_core::tape::{LayerTape, TapeRecord};
use asw_core::{Tensor, WatermarkMessage};

const H: f64 = 1e-5;
const MAX_REL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut r = Philox::new(seed);
    Tensor::from_fn(shape, |_| r.uniform(lo, hi))
}

/// LeakyReLU on/off pattern of one decoder pass; finite differences are only
/// meaningful between points that share it.
type Pattern = Vec<bool>;

fn no_pattern(_: &Tensor) -> Pattern {
    Vec::new()
}

fn decoder_pattern(cfg: &DecoderConfig, w: &asw_core::DecoderWeights, x: &Tensor) -> Pattern {
    let pass = decoder::forward(cfg, w, x).unwrap();
    pass.tape
        .records()
        .iter()
        .filter_map(|r| match r {
            TapeRecord::LeakyRelu { input, .. } => Some(input.data().iter().map(|&v| v > 0.0).collect::<Vec<_>>()),
            _ => None,
        })
        .flatten()
        .collect()
}

/// Derivative of `f` along coordinate `i`: a central difference with step
/// `H` when `x ± H` lie on the same linear piece as `x`, otherwise a
/// second-order one-sided difference on the side without a kink.
fn fd_derivative(f: &dyn Fn(&Tensor) -> f64, pattern: &dyn Fn(&Tensor) -> Pattern, x: &Tensor, i: usize) -> (f64, bool) {
    let at = |off: f64| {
        let mut z = x.clone();
        z.data_mut()[i] += off;
        z
    };
    let p0 = pattern(x);
    let mut h = H;
    loop {
        let (xp, xm) = (at(h), at(-h));
        let (pp, pm) = (pattern(&xp), pattern(&xm));
        if pp == p0 && pm == p0 {
            return ((f(&xp) - f(&xm)) / (2.0 * h), h != H);
        }
        if pm == p0 && pattern(&at(-2.0 * h)) == p0 {
            return ((3.0 * f(x) - 4.0 * f(&xm) + f(&at(-2.0 * h))) / (2.0 * h), true);
        }
        if pp == p0 && pattern(&at(2.0 * h)) == p0 {
            return ((-3.0 * f(x) + 4.0 * f(&xp) - f(&at(2.0 * h))) / (2.0 * h), true);
        }
        h *= 0.1;
    }
}

/// Worst relative error of `grad` against finite differences of `f` over
/// the `probes` coordinates, plus the number of probes that straddled a kink.
fn check(f: &dyn Fn(&Tensor) -> f64, pattern: &dyn Fn(&Tensor) -> Pattern, x: &Tensor, grad: &Tensor, probes: &[usize]) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut kinks = 0;
    for &i in probes {
        let (fd, kinked) = fd_derivative(f, pattern, x, i);
        kinks += usize::from(kinked);
        worst = worst.max(rel_err(grad.data()[i], fd));
    }
    (worst, kinks)
}

fn probes(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut r = Philox::new(seed);
    (0..count).map(|_| r.below(n as u64) as usize).collect()
}

/// Scalar readout `<cot, layer(x)>` so that its gradient is `layer_backward(cot)`.
fn layer_case(x: Tensor, fwd: impl Fn(&Tensor) -> Tensor, bwd: impl Fn(&Tensor, &Tensor) -> Tensor, seed: u64) {
    let y = fwd(&x);
    let cot = random_tensor(y.shape(), seed, -1.0, 1.0);
    let grad = bwd(&x, &cot);
    assert_eq!(grad.shape(), x.shape());
    let f = |z: &Tensor| fwd(z).dot(&cot);
    let (worst, _) = check(&f, &no_pattern, &x, &grad, &probes(x.len(), 100, seed + 1));
    assert!(worst < MAX_REL, "worst relative error {worst}");
}

#[test]
fn avg_pool_gradient() {
    let x = random_tensor(&[2, 8, 8], 1, -1.0, 1.0);
    layer_case(x, |x| ops::avg_pool2d(x, 4).unwrap(), |_, g| ops::avg_pool2d_backward(g, 4).unwrap(), 2);
}

#[test]
fn conv_gradient() {
    let w = random_tensor(&[4, 3, 3, 3], 3, -1.0, 1.0);
    let x = random_tensor(&[3, 9, 10], 4, -1.0, 1.0);
    layer_case(
        x,
        |x| ops::conv2d(x, &w, 2, 1).unwrap(),
        |_, g| ops::conv2d_backward(g, &w, (3, 9, 10), 2, 1).unwrap(),
        5,
    );
}

#[test]
fn instance_norm_gradient() {
    let x = random_tensor(&[3, 5, 6], 6, -2.0, 2.0);
    layer_case(
        x,
        |x| ops::instance_norm(x, 1e-5).unwrap(),
        |x, g| ops::instance_norm_backward(g, &ops::instance_norm_cached(x, 1e-5).unwrap()).unwrap(),
        7,
    );
}

#[test]
fn leaky_relu_gradient() {
    // Keep inputs away from the kink.
    let mut r = Philox::new(8);
    let x = Tensor::from_fn(&[40], |_| {
        let v = r.uniform(0.1, 2.0);
        if r.bernoulli(0.5) { v } else { -v }
    });
    layer_case(x, |x| ops::leaky_relu(x, 0.2), |x, g| ops::leaky_relu_backward(g, x, 0.2).unwrap(), 9);
}

#[test]
fn global_pool_fc_sigmoid_gradient() {
    let x = random_tensor(&[5, 3, 3], 10, -1.0, 1.0);
    layer_case(
        x.clone(),
        |x| ops::adaptive_avg_pool(x, 1).unwrap(),
        |_, g| ops::adaptive_avg_pool_backward(g, (5, 3, 3), 1).unwrap(),
        11,
    );
    let w = random_tensor(&[4, 6], 12, -1.0, 1.0);
    let b = random_tensor(&[4], 13, -1.0, 1.0);
    layer_case(
        random_tensor(&[6], 14, -1.0, 1.0),
        |v| ops::fully_connected(v, &w, &b).unwrap(),
        |_, g| ops::fully_connected_backward(g, &w).unwrap(),
        15,
    );
    layer_case(
        random_tensor(&[10], 16, -4.0, 4.0),
        ops::sigmoid,
        |z, g| ops::sigmoid_backward(g, &ops::sigmoid(z)).unwrap(),
        17,
    );
}

#[test]
fn zero_cotangent_gives_zero_gradient() {
    let cfg = DecoderConfig { channels: 8, ..DecoderConfig::default() };
    let w = build_decoder(&cfg).unwrap();
    let img = random_tensor(&[3, 64, 64], 18, 0.0, 1.0);
    let pass = decoder::forward(&cfg, &w, &img).unwrap();
    let g = pass.tape.backward_input_grad(&Tensor::zeros(&[36])).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_tape_gradient() {
    let mut tape = LayerTape::new(&[3, 4, 4]);
    tape.push(TapeRecord::AvgPool { stride: 1 }, &[3, 4, 4]);
    let g = random_tensor(&[3, 4, 4], 19, -1.0, 1.0);
    assert_eq!(tape.backward_input_grad(&g).unwrap(), g);
}

/// Composed decoder: 200 probes on each of 5 random 256x256 images at the
/// default architecture, through the full embedding objective.
#[test]
fn composed_decoder_gradient_matches_finite_differences() {
    let cfg = DecoderConfig::default();
    let w = build_decoder(&cfg).unwrap();
    let mut worst = 0.0f64;
    let mut kinks = 0;
    let pattern = |z: &Tensor| decoder_pattern(&cfg, &w, z);
    for k in 0..5u64 {
        let host = random_tensor(&[3, 256, 256], 100 + k, 0.0, 1.0);
        let x = host.map(|v| (v + 0.01).min(1.0));
        let mut r = Philox::new(200 + k);
        let msg = WatermarkMessage::random(36, &mut r);
        let obj = EmbedObjective::new(&cfg, &w, &host, &msg, 0.75);
        let eval = obj.evaluate(&x).unwrap();
        let f = |z: &Tensor| obj.evaluate(z).unwrap().value;
        let (e, n) = check(&f, &pattern, &x, &eval.grad, &probes(x.len(), 200, 300 + k));
        worst = worst.max(e);
        kinks += n;
    }
    println!("composed decoder: worst relative error {worst:.3e} over 1000 probes ({kinks} next to a kink)");
    assert!(worst < MAX_REL, "worst relative error {worst}");
}

/// Same check for the raw probability head through `backward_input_grad`,
/// on a deeper, non-default architecture.
#[test]
fn deep_decoder_probability_gradient() {
    let cfg = DecoderConfig { depth: 5, pool_stride: 2, channels: 16, ..DecoderConfig::default() };
    let w = build_decoder(&cfg).unwrap();
    let x = random_tensor(&[3, 64, 64], 20, 0.0, 1.0);
    let cot = random_tensor(&[36], 21, -1.0, 1.0);
    let pass = decoder::forward(&cfg, &w, &x).unwrap();
    let grad = pass.tape.backward_input_grad(&cot).unwrap();
    let f = |z: &Tensor| decoder::forward(&cfg, &w, z).unwrap().probs.dot(&cot);
    let pattern = |z: &Tensor| decoder_pattern(&cfg, &w, z);
    let (worst, _) = check(&f, &pattern, &x, &grad, &probes(x.len(), 200, 22));
    assert!(worst < MAX_REL, "worst relative error {worst}");
}

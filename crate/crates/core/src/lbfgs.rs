//! Limited-memory BFGS with an Armijo backtracking line search.
//!
//! The state is driven one step at a time so the caller can modify the
//! iterate between steps (the embedder projects onto the pixel box). The
//! curvature pair for the previous step is formed lazily at the start of the
//! next step from whatever iterate the caller hands back, and is dropped if it
//! fails the positivity test.

use std::collections::VecDeque;

use crate::error::{AswError, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MEMORY: usize = 10;
pub const CURVATURE_EPS: f64 = 1e-10;
pub const ARMIJO_C1: f64 = 1e-4;
pub const MAX_LINE_SEARCH_TRIALS: usize = 20;

#[derive(Debug, Clone)]
struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsState {
    memory: usize,
    history: VecDeque<CurvaturePair>,
    last: Option<(Vec<f64>, Vec<f64>)>,
    iteration: usize,
    consecutive_rejects: usize,
    rejected_pairs: usize,
}

/// Result of one [`LbfgsState::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x: Tensor,
    pub value: f64,
    pub grad: Tensor,
    /// False when the line search ran out of trials; `x` is then the input.
    pub accepted: bool,
    pub step_len: f64,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Default for LbfgsState {
    fn default() -> Self {
        Self::new(DEFAULT_MEMORY)
    }
}

impl LbfgsState {
    pub fn new(memory: usize) -> Self {
        assert!(memory > 0, "L-BFGS memory must be positive");
        LbfgsState {
            memory,
            history: VecDeque::with_capacity(memory),
            last: None,
            iteration: 0,
            consecutive_rejects: 0,
            rejected_pairs: 0,
        }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rejected_pairs(&self) -> usize {
        self.rejected_pairs
    }

    /// Inner products `s·y` of the stored pairs, oldest first.
    pub fn curvatures(&self) -> Vec<f64> {
        self.history.iter().map(|p| 1.0 / p.rho).collect()
    }

    /// Forget all curvature information. The iteration counter is kept.
    pub fn reset(&mut self) {
        self.history.clear();
        self.last = None;
        self.consecutive_rejects = 0;
    }

    fn absorb_pair(&mut self, x: &[f64], grad: &[f64]) {
        let Some((px, pg)) = self.last.take() else {
            return;
        };
        let s: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad.iter().zip(&pg).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > CURVATURE_EPS {
            if self.history.len() == self.memory {
                self.history.pop_front();
            }
            self.history.push_back(CurvaturePair { s, y, rho: 1.0 / sy });
            self.consecutive_rejects = 0;
        } else {
            self.rejected_pairs += 1;
            self.consecutive_rejects += 1;
            if self.consecutive_rejects >= 2 {
                self.reset();
            }
        }
    }

    /// `-H g` by the two-loop recursion; `-g / |g|` with no history.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        if self.history.is_empty() {
            let norm = dot(grad, grad).sqrt();
            return grad.iter().map(|g| -g / norm).collect();
        }
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.history.len());
        for p in self.history.iter().rev() {
            let a = p.rho * dot(&p.s, &q);
            q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let newest = self.history.back().expect("non-empty");
        let gamma = 1.0 / (newest.rho * dot(&newest.y, &newest.y));
        q.iter_mut().for_each(|v| *v *= gamma);
        for (p, a) in self.history.iter().zip(alphas.into_iter().rev()) {
            let b = p.rho * dot(&p.y, &q);
            q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// Take one quasi-Newton step from `x` (with objective `value` and gradient
    /// `grad`) using `objective` for the line search. The first step tries a
    /// step length of `eta`, later steps start at 1.
    pub fn step<F>(&mut self, x: &Tensor, value: f64, grad: &Tensor, eta: f64, mut objective: F) -> Result<StepOutcome>
    where
        F: FnMut(&Tensor) -> Result<(f64, Tensor)>,
    {
        x.ensure_same_shape(grad)?;
        if !value.is_finite() {
            return Err(AswError::InvalidConfig(format!("objective value {value} is not finite")));
        }
        self.absorb_pair(x.data(), grad.data());
        let first = self.iteration == 0;
        self.iteration += 1;

        let unchanged = |accepted| StepOutcome {
            x: x.clone(),
            value,
            grad: grad.clone(),
            accepted,
            step_len: 0.0,
            evaluations: 0,
        };
        if grad.data().iter().all(|&g| g == 0.0) {
            self.last = Some((x.data().to_vec(), grad.data().to_vec()));
            return Ok(unchanged(true));
        }

        let mut dir = self.direction(grad.data());
        let mut gtd = dot(grad.data(), &dir);
        if !(gtd < 0.0) {
            self.reset();
            dir = self.direction(grad.data());
            gtd = dot(grad.data(), &dir);
        }

        let mut t = if first { eta } else { 1.0 };
        for trial in 1..=MAX_LINE_SEARCH_TRIALS {
            let cand: Vec<f64> = x.data().iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let cand = Tensor::new(x.shape(), cand)?;
            let (f_new, g_new) = objective(&cand)?;
            if f_new.is_finite() && f_new <= value + ARMIJO_C1 * t * gtd {
                self.last = Some((x.data().to_vec(), grad.data().to_vec()));
                return Ok(StepOutcome {
                    x: cand,
                    value: f_new,
                    grad: g_new,
                    accepted: true,
                    step_len: t,
                    evaluations: trial,
                });
            }
            t *= 0.5;
        }
        self.reset();
        let mut out = unchanged(false);
        out.evaluations = MAX_LINE_SEARCH_TRIALS;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Philox;

    fn quad_1d(x: &Tensor) -> Result<(f64, Tensor)> {
        let v = x.data()[0];
        Ok(((v - 3.0).powi(2), Tensor::new(&[1], vec![2.0 * (v - 3.0)])?))
    }

    fn run_1d(state: &mut LbfgsState, x0: f64, steps: usize) -> f64 {
        let mut x = Tensor::new(&[1], vec![x0]).unwrap();
        let (mut f, mut g) = quad_1d(&x).unwrap();
        for _ in 0..steps {
            let out = state.step(&x, f, &g, 0.05, quad_1d).unwrap();
            (x, f, g) = (out.x, out.value, out.grad);
        }
        x.data()[0]
    }

    #[test]
    fn one_dimensional_quadratic_converges() {
        let mut st = LbfgsState::default();
        let x = run_1d(&mut st, 0.0, 10);
        assert!((x - 3.0).abs() < 1e-6, "{x}");
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut st = LbfgsState::default();
        let x = Tensor::new(&[2], vec![1.0, -2.0]).unwrap();
        let out = st
            .step(&x, 0.0, &Tensor::zeros(&[2]), 0.05, |_| panic!("no evaluation expected"))
            .unwrap();
        assert_eq!(out.x, x);
        assert!(out.accepted);
    }

    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
        n: usize,
    }

    impl Quadratic {
        fn random_spd(n: usize, seed: u64) -> Self {
            let mut r = Philox::new(seed);
            let m: Vec<f64> = (0..n * n).map(|_| r.gaussian()).collect();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum::<f64>() / n as f64;
                }
                a[i * n + i] += 0.1;
            }
            let b = (0..n).map(|_| r.gaussian()).collect();
            Quadratic { a, b, n }
        }

        fn eval(&self, x: &Tensor) -> Result<(f64, Tensor)> {
            let x = x.data();
            let ax: Vec<f64> = (0..self.n).map(|i| dot(&self.a[i * self.n..(i + 1) * self.n], x)).collect();
            let f = 0.5 * dot(x, &ax) - dot(&self.b, x);
            let g = ax.iter().zip(&self.b).map(|(p, q)| p - q).collect();
            Ok((f, Tensor::new(&[self.n], g)?))
        }
    }

    #[test]
    fn spd_quadratic_descends_monotonically() {
        let q = Quadratic::random_spd(100, 21);
        let mut st = LbfgsState::default();
        let mut x = Tensor::zeros(&[100]);
        let (mut f, mut g) = q.eval(&x).unwrap();
        let f0 = f;
        for _ in 0..60 {
            let out = st.step(&x, f, &g, 0.05, |c| q.eval(c)).unwrap();
            if out.accepted {
                assert!(out.value <= f, "{} > {f}", out.value);
            }
            assert!(st.history_len() <= st.memory());
            assert!(st.curvatures().iter().all(|&c| c > CURVATURE_EPS));
            (x, f, g) = (out.x, out.value, out.grad);
        }
        assert!(f < f0);
        assert!(g.max_abs() < 1e-3, "{}", g.max_abs());
    }

    #[test]
    fn reset_empties_history_and_is_idempotent() {
        let mut st = LbfgsState::default();
        run_1d(&mut st, 0.0, 2);
        assert!(st.history_len() > 0);
        let it = st.iteration();
        st.reset();
        let once = (st.history_len(), st.iteration());
        st.reset();
        assert_eq!((st.history_len(), st.iteration()), once);
        assert_eq!(once, (0, it));
    }

    #[test]
    fn after_reset_step_is_steepest_descent() {
        let q = Quadratic::random_spd(10, 4);
        let mut st = LbfgsState::default();
        let x = Tensor::zeros(&[10]);
        let (f, g) = q.eval(&x).unwrap();
        let out = st.step(&x, f, &g, 0.05, |c| q.eval(c)).unwrap();
        st.reset();
        let (x1, f1, g1) = (out.x, out.value, out.grad);
        let out2 = st.step(&x1, f1, &g1, 0.05, |c| q.eval(c)).unwrap();
        let gn = g1.dot(&g1).sqrt();
        for i in 0..10 {
            let moved = out2.x.data()[i] - x1.data()[i];
            let expect = -out2.step_len * g1.data()[i] / gn;
            assert!((moved - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn restart_after_reset_still_converges() {
        let mut st = LbfgsState::default();
        let x = run_1d(&mut st, -10.0, 3);
        st.reset();
        let x = run_1d(&mut st, x, 10);
        assert!((x - 3.0).abs() < 1e-6);
    }

    #[test]
    fn iterates_are_deterministic() {
        let q = Quadratic::random_spd(30, 8);
        let trace = || {
            let mut st = LbfgsState::new(5);
            let mut x = Tensor::zeros(&[30]);
            let (mut f, mut g) = q.eval(&x).unwrap();
            let mut xs = Vec::new();
            for _ in 0..15 {
                let out = st.step(&x, f, &g, 0.05, |c| q.eval(c)).unwrap();
                (x, f, g) = (out.x, out.value, out.grad);
                xs.extend_from_slice(x.data());
            }
            xs
        };
        assert_eq!(trace(), trace());
    }

    #[test]
    fn failed_line_search_leaves_x_unchanged() {
        // Objective that rejects every trial point.
        let mut st = LbfgsState::default();
        let x = Tensor::new(&[1], vec![0.0]).unwrap();
        let g = Tensor::new(&[1], vec![1.0]).unwrap();
        let out = st.step(&x, 0.0, &g, 1.0, |c| Ok((1.0, c.clone()))).unwrap();
        assert!(!out.accepted);
        assert_eq!(out.x, x);
        assert_eq!(out.evaluations, MAX_LINE_SEARCH_TRIALS);
    }

    #[test]
    fn non_positive_pairs_are_skipped() {
        let mut st = LbfgsState::default();
        let x0 = Tensor::new(&[1], vec![0.0]).unwrap();
        let g0 = Tensor::new(&[1], vec![-1.0]).unwrap();
        // Concave objective: every pair has s·y < 0.
        let concave = |c: &Tensor| -> Result<(f64, Tensor)> {
            let v = c.data()[0];
            Ok((-v * v - v, Tensor::new(&[1], vec![-2.0 * v - 1.0])?))
        };
        let out = st.step(&x0, 0.0, &g0, 0.05, concave).unwrap();
        let _ = st.step(&out.x, out.value, &out.grad, 0.05, concave).unwrap();
        assert_eq!(st.history_len(), 0);
        assert!(st.rejected_pairs() >= 1);
    }
}

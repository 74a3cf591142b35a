//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop once the Euclidean gradient norm falls below this.
    pub gtol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_linesearch: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            memory: 10,
            gtol: 1e-10,
            c1: 1e-4,
            c2: 0.9,
            max_linesearch: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub params: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl LbfgsReport {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Trial {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a LbfgsOptions,
    evals: usize,
    iteration: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, alpha: f64) -> Result<Trial> {
        let xt: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        let (value, grad) = (self.f)(&xt)?;
        self.evals += 1;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                last_finite: self.x.to_vec(),
            });
        }
        let slope = dot(&grad, self.dir);
        Ok(Trial {
            alpha,
            value,
            grad,
            slope,
        })
    }

    fn armijo(&self, t: &Trial) -> bool {
        t.value <= self.f0 + self.opts.c1 * t.alpha * self.slope0
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.opts.c2 * self.slope0
    }

    /// Returns an accepted trial, or the best Armijo point seen if the
    /// strong-Wolfe conditions could not be met within the budget.
    fn search(&mut self, alpha0: f64) -> Result<(Option<Trial>, bool)> {
        let mut prev = Trial {
            alpha: 0.0,
            value: self.f0,
            grad: Vec::new(),
            slope: self.slope0,
        };
        let mut alpha = alpha0;
        let mut best: Option<Trial> = None;
        for i in 0..self.opts.max_linesearch {
            let t = self.eval(alpha)?;
            if !self.armijo(&t) || (i > 0 && t.value >= prev.value) {
                return self.zoom(prev, t, best);
            }
            if self.curvature(&t) {
                return Ok((Some(t), true));
            }
            if t.slope >= 0.0 {
                return self.zoom(t, prev, best);
            }
            alpha = 2.0 * t.alpha;
            prev = t;
            best = Some(Trial {
                grad: prev.grad.clone(),
                ..prev
            });
        }
        Ok((best, false))
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial, mut best: Option<Trial>) -> Result<(Option<Trial>, bool)> {
        for _ in 0..self.opts.max_linesearch {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= f64::EPSILON * b.max(1e-300) {
                break;
            }
            let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
            if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
                alpha = 0.5 * (lo.alpha + hi.alpha);
            }
            let t = self.eval(alpha)?;
            if !self.armijo(&t) || t.value >= lo.value {
                hi = t;
                continue;
            }
            if self.curvature(&t) {
                return Ok((Some(t), true));
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
            if best.as_ref().is_none_or(|b| lo.value < b.value) {
                best = Some(Trial {
                    grad: lo.grad.clone(),
                    ..lo
                });
            }
        }
        Ok((best, false))
    }
}

/// Minimizer of the cubic interpolating values and slopes at both ends.
fn cubic_min(a: &Trial, b: &Trial) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let alpha = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    alpha.is_finite().then_some(alpha)
}

/// Minimizes `f` starting from `x0`.
///
/// `f` returns the objective value and gradient. Terminates when the
/// gradient norm drops below `opts.gtol`, after `opts.max_iters` accepted
/// steps, or when the line search cannot make progress. `on_step` is called
/// after every accepted step with `(iteration, x, value)`.
pub fn lbfgs_optimize<F>(
    x0: &[f64],
    mut f: F,
    opts: &LbfgsOptions,
    mut on_step: impl FnMut(usize, &[f64], f64),
) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if opts.memory == 0 {
        return Err(contract("L-BFGS memory must be >= 1"));
    }
    let mut x = x0.to_vec();
    let (mut value, mut grad) = f(&x)?;
    let mut evaluations = 1;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            last_finite: x,
        });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let gnorm = norm(&grad);
        if gnorm < opts.gtol {
            termination = Termination::Converged;
            break;
        }
        let mut dir = two_loop(&grad, &history);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let alpha0 = if history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut ls = LineSearch {
            f: &mut f,
            x: &x,
            dir: &dir,
            f0: value,
            slope0: slope,
            opts,
            evals: 0,
            iteration: iterations,
        };
        let (trial, _wolfe) = ls.search(alpha0)?;
        evaluations += ls.evals;
        let Some(t) = trial.filter(|t| t.value < value || (t.value == value && t.alpha > 0.0 && norm(&t.grad) < gnorm))
        else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = dir.iter().map(|d| t.alpha * d).collect();
        let y: Vec<f64> = t.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        value = t.value;
        grad = t.grad;
        iterations += 1;
        on_step(iterations, &x, value);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
    }
    if termination == Termination::MaxIterations && norm(&grad) < opts.gtol {
        termination = Termination::Converged;
    }
    Ok(LbfgsReport {
        params: x,
        value,
        grad,
        iterations,
        evaluations,
        termination,
    })
}

/// `-H_k * grad` by the two-loop recursion over stored `(s, y, 1/(s.y))`.
fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((v, g))
    }

    #[test]
    fn quadratic_converges_quickly() {
        let target: Vec<f64> = (0..8).map(|i| i as f64 * 0.7 - 2.0).collect();
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let d: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
            Ok((0.5 * dot(&d, &d), d))
        };
        for start in [vec![0.0; 8], vec![50.0; 8], vec![-1e-3; 8]] {
            let r = lbfgs_optimize(&start, f, &LbfgsOptions::default(), |_, _, _| {}).unwrap();
            assert_eq!(r.termination, Termination::Converged);
            assert!(r.iterations <= 8 + 2, "{} iterations", r.iterations);
            for (a, b) in r.params.iter().zip(&target) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let opts = LbfgsOptions {
            max_iters: 100,
            ..LbfgsOptions::default()
        };
        let mut values = vec![];
        let r = lbfgs_optimize(&[-1.2, 1.0], rosenbrock, &opts, |_, _, v| values.push(v)).unwrap();
        assert!(r.value < 1e-8, "f = {} after {} iterations", r.value, r.iterations);
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let r = lbfgs_optimize(&[1.0, 1.0], rosenbrock, &LbfgsOptions::default(), |_, _, _| {}).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.params, vec![1.0, 1.0]);
        assert_eq!(r.termination, Termination::Converged);
    }

    #[test]
    fn non_finite_objective_aborts_with_last_iterate() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 0.5 {
                Ok((f64::NAN, vec![f64::NAN]))
            } else {
                Ok((-x[0], vec![-1.0]))
            }
        };
        match lbfgs_optimize(&[0.0], f, &LbfgsOptions::default(), |_, _, _| {}) {
            Err(Error::NonFinite { last_finite, .. }) => assert!(last_finite[0] <= 0.5),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}

use crate::error::{contract, Error, Result};
use crate::training::{lbfgs_optimize, LbfgsOptions, Termination};

use super::objective::Objective;
use super::target::Target;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub max_iters: usize,
    pub memory: usize,
    pub gtol: f64,
    /// Runs that stop early are still accepted below this gradient norm.
    pub accept_gtol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            memory: 20,
            gtol: 1e-10,
            accept_gtol: 1e-8,
        }
    }
}

/// Parameters re-minimized under a perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrained {
    pub params: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// `f(theta_hat) - f(theta_eps)`.
    pub delta: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Re-minimizes the perturbed objective
/// `L(theta) + eps * (sum_add L(x) - sum_remove L(x))` from the trained
/// optimum.
///
/// Two terms are added so that the oracle measures the same quantity the
/// damped influence formula predicts: the linear term `-g0 . (theta - theta_hat)`
/// makes `theta_hat` exactly stationary even if training stopped short, and
/// the proximal term `lambda/2 |theta - theta_hat|^2` matches the Hessian
/// damping. With `lambda = 0` at a true optimum both vanish.
pub struct RetrainOracle<'a, O: Objective> {
    objective: &'a O,
    anchor: Vec<f64>,
    anchor_grad: Vec<f64>,
    lambda: f64,
    pub options: OracleOptions,
}

impl<'a, O: Objective> RetrainOracle<'a, O> {
    pub fn new(objective: &'a O, params: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(contract("oracle damping must be finite and non-negative"));
        }
        let (_, anchor_grad) = objective.mean_value_grad(params)?;
        Ok(Self {
            objective,
            anchor: params.to_vec(),
            anchor_grad,
            lambda,
            options: OracleOptions::default(),
        })
    }

    /// Minimizer of the perturbed objective, warm-started at the anchor.
    pub fn retrain(&self, add: &[O::Point], remove: &[O::Point], epsilon: f64) -> Result<Retrained> {
        let n = self.objective.len() as f64;
        if !epsilon.is_finite() || epsilon.abs() > 2.0 / n {
            return Err(contract(format!("|epsilon| must not exceed 2/N = {}", 2.0 / n)));
        }
        for pt in remove {
            if self.objective.index_of(pt).is_none() {
                return Err(contract(format!("removed point {pt:?} is not a training point")));
            }
        }
        if epsilon == 0.0 || (add.is_empty() && remove.is_empty()) {
            return Ok(Retrained {
                params: self.anchor.clone(),
                grad_norm: 0.0,
                iterations: 0,
            });
        }
        let perturbed = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (mut value, mut grad) = self.objective.mean_value_grad(theta)?;
            for (i, (&t, &a)) in theta.iter().zip(&self.anchor).enumerate() {
                let d = t - a;
                value += -self.anchor_grad[i] * d + 0.5 * self.lambda * d * d;
                grad[i] += -self.anchor_grad[i] + self.lambda * d;
            }
            let signed = add.iter().map(|x| (x, epsilon)).chain(remove.iter().map(|x| (x, -epsilon)));
            for (x, c) in signed {
                let (l, g) = self.objective.point_loss_grad(theta, x)?;
                value += c * l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += c * b);
            }
            Ok((value, grad))
        };
        let opts = LbfgsOptions {
            max_iters: self.options.max_iters,
            memory: self.options.memory,
            gtol: self.options.gtol,
            ..LbfgsOptions::default()
        };
        let report = match lbfgs_optimize(&self.anchor, perturbed, &opts, |_, _, _| {}) {
            Ok(r) => r,
            Err(Error::NonFinite { .. }) => return Err(Error::OracleUnavailable("non-finite objective".into())),
            Err(e) => return Err(e),
        };
        let grad_norm = report.grad_norm();
        if report.termination != Termination::Converged && grad_norm > self.options.accept_gtol {
            return Err(Error::OracleUnavailable(format!(
                "optimizer stopped ({:?}) at gradient norm {grad_norm:e}",
                report.termination
            )));
        }
        Ok(Retrained {
            params: report.params,
            grad_norm,
            iterations: report.iterations,
        })
    }

    /// `f(theta_hat) - f(theta_eps)` for a retrained parameter vector.
    pub fn delta_for<T: Target + ?Sized>(&self, target: &T, retrained: &Retrained) -> Result<OracleOutcome> {
        let delta = if retrained.params == self.anchor {
            0.0
        } else {
            target.value_grad(&self.anchor)?.0 - target.value_grad(&retrained.params)?.0
        };
        Ok(OracleOutcome {
            delta,
            grad_norm: retrained.grad_norm,
            iterations: retrained.iterations,
        })
    }

    pub fn delta<T: Target + ?Sized>(
        &self,
        target: &T,
        add: &[O::Point],
        remove: &[O::Point],
        epsilon: f64,
    ) -> Result<OracleOutcome> {
        let retrained = self.retrain(add, remove, epsilon)?;
        self.delta_for(target, &retrained)
    }
}

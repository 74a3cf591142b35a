use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::model::fingerprint;

use super::objective::Objective;

/// Largest parameter count for which a dense Hessian is assembled.
pub const MAX_DENSE_PARAMS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianOptions {
    /// Damping added to the diagonal. `None` uses `1e-6 * |trace(H)| / P`.
    pub lambda: Option<f64>,
    /// Factor-of-ten damping increases allowed before giving up.
    pub max_escalations: usize,
    pub max_params: usize,
}

impl Default for HessianOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            max_escalations: 8,
            max_params: MAX_DENSE_PARAMS,
        }
    }
}

/// Dense, symmetrized, damped Hessian of the training objective with a
/// cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct HessianOperator {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lambda: f64,
    escalations: usize,
    fingerprint: String,
    raw_asymmetry: f64,
}

fn central_column<O: Objective>(objective: &O, params: &[f64], j: usize) -> Result<Vec<f64>> {
    let step = f64::EPSILON.cbrt() * (1.0 + params[j].abs());
    let mut plus = params.to_vec();
    let mut minus = params.to_vec();
    plus[j] += step;
    minus[j] -= step;
    let width = plus[j] - minus[j];
    let (_, gp) = objective.mean_value_grad(&plus)?;
    let (_, gm) = objective.mean_value_grad(&minus)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / width).collect())
}

impl HessianOperator {
    /// Builds the Hessian column by column from central differences of the
    /// exact gradient, symmetrizes it and factors `H + lambda * I`.
    pub fn assemble<O: Objective>(objective: &O, params: &[f64], opts: &HessianOptions) -> Result<Self> {
        let p = objective.num_params();
        if params.len() != p {
            return Err(contract(format!("expected {p} parameters, got {}", params.len())));
        }
        if p > opts.max_params {
            return Err(Error::GuardExceeded {
                params: p,
                limit: opts.max_params,
            });
        }
        if objective.is_empty() {
            return Err(Error::EmptySet("training objective has no points".into()));
        }
        let columns: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|j| central_column(objective, params, j))
            .collect::<Result<_>>()?;
        let raw = DMatrix::from_fn(p, p, |i, j| columns[j][i]);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: 0,
                last_finite: params.to_vec(),
            });
        }
        Self::from_matrix(raw, params, opts)
    }

    /// Wraps an explicitly given Hessian, symmetrizing it first.
    pub fn from_matrix(raw: DMatrix<f64>, params: &[f64], opts: &HessianOptions) -> Result<Self> {
        let p = raw.nrows();
        if raw.ncols() != p || params.len() != p {
            return Err(contract("Hessian must be square and match the parameter count"));
        }
        let raw_asymmetry = (0..p)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| (raw[(i, j)] - raw[(j, i)]).abs() / (1.0 + raw[(i, j)].abs().max(raw[(j, i)].abs())))
            .fold(0.0, f64::max);
        let matrix = (&raw + raw.transpose()) * 0.5;
        let floor = 1e-6 * matrix.trace().abs() / p as f64;
        let mut lambda = match opts.lambda {
            Some(l) if !(l.is_finite() && l >= 0.0) => {
                return Err(Error::InvalidConfig {
                    field: "influence.lambda".into(),
                    reason: format!("must be finite and non-negative, got {l}"),
                })
            }
            Some(l) => l,
            None => floor,
        };
        let mut escalations = 0;
        loop {
            let mut damped = matrix.clone();
            for i in 0..p {
                damped[(i, i)] += lambda;
            }
            if let Some(chol) = damped.cholesky() {
                return Ok(Self {
                    matrix,
                    chol,
                    lambda,
                    escalations,
                    fingerprint: fingerprint(params),
                    raw_asymmetry,
                });
            }
            if escalations == opts.max_escalations {
                return Err(Error::SingularHessian { escalations, lambda });
            }
            escalations += 1;
            lambda = if lambda > 0.0 {
                lambda * 10.0
            } else if floor > 0.0 {
                floor
            } else {
                1e-12
            };
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Undamped symmetrized Hessian.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Damping actually used, after any escalation.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn escalations(&self) -> usize {
        self.escalations
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Largest relative `|H_ij - H_ji|` before symmetrization.
    pub fn raw_asymmetry(&self) -> f64 {
        self.raw_asymmetry
    }

    /// Fails if the operator was assembled at different parameters.
    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        let found = fingerprint(params);
        if found != self.fingerprint {
            return Err(Error::StaleHessian {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    /// `(H + lambda * I)^{-1} v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(contract("right-hand side length does not match the Hessian"));
        }
        let x = self.chol.solve(&DVector::from_column_slice(v));
        Ok(x.iter().copied().collect())
    }

    /// `(H + lambda * I) v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v);
        let y = &self.matrix * &x + x * self.lambda;
        y.iter().copied().collect()
    }

    /// Smallest and largest eigenvalue of the undamped Hessian.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        let ev = self.matrix.clone().symmetric_eigenvalues();
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }
}

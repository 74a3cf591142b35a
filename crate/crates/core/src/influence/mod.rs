//! Influence of training points on model-derived quantities: per-point,
//! group and loss-term forms, plus a retraining oracle to check them.

mod export;
mod hessian;
mod objective;
mod oracle;
mod target;

use rayon::prelude::*;

pub use export::{read_influence_csv, write_influence_csv, InfluenceRow};
pub use hessian::{HessianOperator, HessianOptions, MAX_DENSE_PARAMS};
pub use objective::{LossTerm, Objective, PinnObjective};
pub use oracle::{OracleOptions, OracleOutcome, RetrainOracle, Retrained};
pub use target::{PinnTarget, Target, TargetFunction, TargetKind};

use crate::error::{contract, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One influence value of a training point on a target.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRecord {
    pub target: String,
    pub train_index: usize,
    pub value: f64,
}

/// Target gradient pushed through the inverse damped Hessian.
#[derive(Debug, Clone)]
pub struct TargetSolve {
    pub value: f64,
    pub grad: Vec<f64>,
    /// `(H + lambda * I)^{-1} grad f`.
    pub solved: Vec<f64>,
}

/// Influence queries against one trained parameter vector.
///
/// Per-point loss gradients are computed once on construction; every query
/// then costs one triangular solve and dot products.
pub struct InfluenceEngine<'a, O: Objective> {
    objective: &'a O,
    params: Vec<f64>,
    hessian: &'a HessianOperator,
    point_grads: Vec<Vec<f64>>,
}

impl<'a, O: Objective> InfluenceEngine<'a, O> {
    pub fn new(objective: &'a O, params: &[f64], hessian: &'a HessianOperator) -> Result<Self> {
        hessian.check_params(params)?;
        if hessian.dim() != objective.num_params() {
            return Err(contract("Hessian dimension does not match the objective"));
        }
        let point_grads = objective
            .points()
            .par_iter()
            .map(|pt| objective.point_loss_grad(params, pt).map(|(_, g)| g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            objective,
            params: params.to_vec(),
            hessian,
            point_grads,
        })
    }

    pub fn objective(&self) -> &O {
        self.objective
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn hessian(&self) -> &HessianOperator {
        self.hessian
    }

    /// Gradient of the weighted loss contribution of training point `i`.
    pub fn point_grad(&self, i: usize) -> Option<&[f64]> {
        self.point_grads.get(i).map(Vec::as_slice)
    }

    pub fn solve_target<T: Target + ?Sized>(&self, target: &T) -> Result<TargetSolve> {
        let (value, grad) = target.value_grad(&self.params)?;
        if grad.len() != self.params.len() {
            return Err(contract("target gradient length does not match the parameters"));
        }
        let solved = self.hessian.solve(&grad)?;
        Ok(TargetSolve { value, grad, solved })
    }

    /// Influence of training point `i` given a precomputed target solve.
    pub fn influence_of(&self, solve: &TargetSolve, i: usize) -> Result<f64> {
        let g = self
            .point_grad(i)
            .ok_or_else(|| contract(format!("training index {i} out of range")))?;
        Ok(dot(&solve.solved, g))
    }

    pub fn influence_single<T: Target + ?Sized>(&self, target: &T, id: &str, i: usize) -> Result<InfluenceRecord> {
        let solve = self.solve_target(target)?;
        Ok(InfluenceRecord {
            target: id.to_string(),
            train_index: i,
            value: self.influence_of(&solve, i)?,
        })
    }

    /// Influence of a candidate point that need not be in the training set.
    pub fn influence_of_point(&self, solve: &TargetSolve, point: &O::Point) -> Result<f64> {
        let (_, g) = self.objective.point_loss_grad(&self.params, point)?;
        Ok(dot(&solve.solved, &g))
    }

    /// Influence of every training point, in training order.
    pub fn row<T: Target + ?Sized>(&self, target: &T) -> Result<Vec<f64>> {
        let solve = self.solve_target(target)?;
        Ok(self.point_grads.iter().map(|g| dot(&solve.solved, g)).collect())
    }

    /// Sum of influences over `add` minus the sum over `remove`.
    pub fn influence_group<T: Target + ?Sized>(&self, target: &T, add: &[O::Point], remove: &[O::Point]) -> Result<f64> {
        let solve = self.solve_target(target)?;
        let mut total = 0.0;
        for pt in add {
            total += self.influence_of_point(&solve, pt)?;
        }
        for pt in remove {
            let i = self
                .objective
                .index_of(pt)
                .ok_or_else(|| contract(format!("removed point {pt:?} is not a training point")))?;
            total -= self.influence_of(&solve, i)?;
        }
        Ok(total)
    }

    /// Predicted effect of dropping whole loss terms: the group influence of
    /// removing every training point that feeds one of `removed`, i.e.
    /// `-grad f . (H + lambda I)^{-1} . sum_i grad L(x_i)` over those points.
    /// Like the group form it is on the scale of `N` times the change in `f`.
    pub fn influence_loss_terms<T: Target + ?Sized>(&self, target: &T, removed: &[LossTerm]) -> Result<f64> {
        if removed.is_empty() {
            return Err(contract("at least one loss term must be removed"));
        }
        let present: Vec<LossTerm> = self.objective.points().iter().map(|p| self.objective.term(p)).collect();
        if present.iter().all(|t| removed.contains(t)) {
            return Err(contract("removing every loss term leaves no objective"));
        }
        let solve = self.solve_target(target)?;
        let mut term_grad = vec![0.0; self.params.len()];
        for (g, t) in self.point_grads.iter().zip(&present) {
            if removed.contains(t) {
                term_grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        Ok(-dot(&solve.solved, &term_grad))
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::{CollocationSet, PointKind, TrainingPoint};
use crate::training::{point_loss_grad, weighted_loss_grad, PinnProblem};

/// Which composite-loss term a training point feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTerm {
    Pde,
    Bc,
}

/// A training objective of the form `(1/N) * sum_i L(x_i; theta)`.
pub trait Objective: Sync {
    type Point: Clone + PartialEq + Send + Sync + std::fmt::Debug;

    fn num_params(&self) -> usize;

    fn points(&self) -> &[Self::Point];

    /// `L(x; theta)` and its parameter gradient for any point, whether or
    /// not it belongs to the training set.
    fn point_loss_grad(&self, params: &[f64], point: &Self::Point) -> Result<(f64, Vec<f64>)>;

    fn term(&self, point: &Self::Point) -> LossTerm;

    fn len(&self) -> usize {
        self.points().len()
    }

    fn is_empty(&self) -> bool {
        self.points().is_empty()
    }

    /// `sum_i coefs[i] * L(x_i; theta)` over the training points.
    fn weighted_value_grad(&self, params: &[f64], coefs: &[f64]) -> Result<(f64, Vec<f64>)> {
        if coefs.len() != self.len() {
            return Err(contract("one coefficient per training point required"));
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; self.num_params()];
        for (pt, &c) in self.points().iter().zip(coefs) {
            if c == 0.0 {
                continue;
            }
            let (l, g) = self.point_loss_grad(params, pt)?;
            value += c * l;
            for (a, gi) in grad.iter_mut().zip(&g) {
                *a += c * gi;
            }
        }
        Ok((value, grad))
    }

    /// The training objective itself and its gradient.
    fn mean_value_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let c = 1.0 / self.len() as f64;
        self.weighted_value_grad(params, &vec![c; self.len()])
    }

    fn index_of(&self, point: &Self::Point) -> Option<usize> {
        self.points().iter().position(|p| p == point)
    }
}

/// The PINN composite loss written as a single mean over points, with
/// `L(x_i) = w_i * loss_i` and `w_i = N / N_group`.
#[derive(Debug, Clone)]
pub struct PinnObjective {
    pub problem: PinnProblem,
    pub colloc: CollocationSet,
    points: Vec<TrainingPoint>,
}

impl PinnObjective {
    pub fn new(problem: PinnProblem, colloc: CollocationSet) -> Result<Self> {
        if colloc.n_pde() == 0 || colloc.n_bc() == 0 {
            return Err(contract("objective needs interior and boundary points"));
        }
        let points = colloc.points();
        Ok(Self {
            problem,
            colloc,
            points,
        })
    }

    pub fn weight(&self, kind: PointKind) -> f64 {
        self.colloc.weight_for(kind)
    }
}

impl Objective for PinnObjective {
    type Point = TrainingPoint;

    fn num_params(&self) -> usize {
        self.problem.model.num_params()
    }

    fn points(&self) -> &[TrainingPoint] {
        &self.points
    }

    fn point_loss_grad(&self, params: &[f64], point: &TrainingPoint) -> Result<(f64, Vec<f64>)> {
        let w = self.weight(point.kind);
        let (l, mut g) = point_loss_grad(params, point, &self.problem)?;
        g.iter_mut().for_each(|v| *v *= w);
        Ok((w * l, g))
    }

    fn term(&self, point: &TrainingPoint) -> LossTerm {
        match point.kind {
            PointKind::Interior => LossTerm::Pde,
            PointKind::Boundary(_) => LossTerm::Bc,
        }
    }

    fn weighted_value_grad(&self, params: &[f64], coefs: &[f64]) -> Result<(f64, Vec<f64>)> {
        let scaled: Vec<f64> = self
            .points
            .iter()
            .zip(coefs)
            .map(|(p, c)| c * self.weight(p.kind))
            .collect();
        if coefs.len() != self.points.len() {
            return Err(contract("one coefficient per training point required"));
        }
        let e = weighted_loss_grad(params, &self.points, &scaled, &self.problem)?;
        Ok((e.value, e.grad))
    }
}

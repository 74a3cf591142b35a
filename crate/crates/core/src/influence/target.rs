use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Recorder, Tape};
use crate::error::{contract, Error, Result};
use crate::geometry::{Point2, PointKind, TrainingPoint};
use crate::model::{forward_jet, forward_value};
use crate::physics::{bc_residual, ns_residual};
use crate::training::{with_tape, PinnProblem};

/// A differentiable scalar of the parameters.
pub trait Target: Sync {
    fn value_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Target for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync,
{
    fn value_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(params)
    }
}

/// Quantity whose sensitivity to training points is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    U1,
    U2,
    P,
    /// Velocity magnitude.
    Speed,
    LossPde,
    /// Only defined at boundary sites.
    LossBc,
    /// PDE residual loss at interior sites, boundary residual loss on the boundary.
    Loss,
    /// Sum of velocity magnitudes over a point set.
    SumSpeed,
}

impl TargetKind {
    /// Per-point kinds in report row order.
    pub const TABLE: [TargetKind; 7] = [
        TargetKind::U1,
        TargetKind::U2,
        TargetKind::P,
        TargetKind::Speed,
        TargetKind::LossPde,
        TargetKind::LossBc,
        TargetKind::Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::U1 => "u1",
            TargetKind::U2 => "u2",
            TargetKind::P => "p",
            TargetKind::Speed => "speed",
            TargetKind::LossPde => "loss_pde",
            TargetKind::LossBc => "loss_bc",
            TargetKind::Loss => "loss",
            TargetKind::SumSpeed => "sum_speed",
        }
    }

    /// Prediction targets only need values; loss targets need full jets.
    pub fn needs_jets(self) -> bool {
        matches!(self, TargetKind::LossPde | TargetKind::LossBc | TargetKind::Loss)
    }

    /// Whether the kind can be evaluated at a site of the given kind.
    pub fn applies_to(self, site: PointKind) -> bool {
        !(self == TargetKind::LossBc && site == PointKind::Interior)
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TargetKind::TABLE
            .into_iter()
            .chain([TargetKind::SumSpeed])
            .find(|k| k.name() == s)
            .ok_or_else(|| contract(format!("unknown target kind `{s}`")))
    }
}

/// A target kind bound to where it is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetFunction {
    At { kind: TargetKind, site: TrainingPoint },
    SumSpeed { points: Vec<Point2> },
}

impl TargetFunction {
    pub fn at(kind: TargetKind, site: TrainingPoint) -> Result<Self> {
        if kind == TargetKind::SumSpeed {
            return Err(contract("sum_speed is defined over a point set"));
        }
        if !kind.applies_to(site.kind) {
            return Err(contract(format!("target {kind} is not defined at an interior site")));
        }
        Ok(TargetFunction::At { kind, site })
    }

    pub fn kind(&self) -> TargetKind {
        match self {
            TargetFunction::At { kind, .. } => *kind,
            TargetFunction::SumSpeed { .. } => TargetKind::SumSpeed,
        }
    }

    fn record<R: Recorder>(&self, rec: &mut R, params: &[R::Scalar], problem: &PinnProblem) -> Result<R::Scalar> {
        let model = &problem.model;
        match self {
            TargetFunction::SumSpeed { points } => {
                let mut speeds = Vec::with_capacity(points.len());
                for p in points {
                    let [u1, u2, _] = forward_value(rec, params, *p, model)?;
                    speeds.push(rec.norm(&[u1, u2]));
                }
                Ok(rec.sum(&speeds))
            }
            TargetFunction::At { kind, site } => {
                if !kind.needs_jets() {
                    let [u1, u2, p] = forward_value(rec, params, site.point, model)?;
                    return Ok(match kind {
                        TargetKind::U1 => u1,
                        TargetKind::U2 => u2,
                        TargetKind::P => p,
                        _ => rec.norm(&[u1, u2]),
                    });
                }
                let f = forward_jet(rec, params, site.point, model)?;
                let pde = |rec: &mut R| {
                    let r = ns_residual(rec, &f, &problem.fluid, problem.variant);
                    rec.sum_squares(&r.components())
                };
                match (kind, site.kind) {
                    (TargetKind::LossPde, _) | (TargetKind::Loss, PointKind::Interior) => Ok(pde(rec)),
                    (TargetKind::LossBc | TargetKind::Loss, PointKind::Boundary(seg)) => {
                        let r = bc_residual(rec, site.point, seg, &f, &problem.fluid, &problem.domain)?;
                        Ok(rec.sum_squares(&r))
                    }
                    _ => Err(contract(format!("target {kind} is not defined at an interior site"))),
                }
            }
        }
    }

    pub fn value_grad_for(&self, params: &[f64], problem: &PinnProblem) -> Result<(f64, Vec<f64>)> {
        if let TargetFunction::SumSpeed { points } = self {
            // one short tape per point keeps memory flat for large sets
            let mut value = 0.0;
            let mut grad = vec![0.0; params.len()];
            for p in points {
                let single = TargetFunction::At {
                    kind: TargetKind::Speed,
                    site: TrainingPoint {
                        point: *p,
                        kind: PointKind::Interior,
                    },
                };
                let (v, g) = single.value_grad_for(params, problem)?;
                value += v;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            return Ok((value, grad));
        }
        with_tape(|tape: &mut Tape| {
            let vars = tape.leaves(params);
            let out = self.record(tape, &vars, problem)?;
            let mut adj = tape.adjoints(out)?;
            adj.truncate(params.len());
            Ok((tape.value(out), adj))
        })
    }

    pub fn value_for(&self, params: &[f64], problem: &PinnProblem) -> Result<f64> {
        self.record(&mut crate::autodiff::Plain, params, problem)
    }
}

/// A [`TargetFunction`] evaluated under a fixed problem definition.
#[derive(Debug, Clone)]
pub struct PinnTarget<'a> {
    pub function: TargetFunction,
    pub problem: &'a PinnProblem,
}

impl Target for PinnTarget<'_> {
    fn value_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.function.value_grad_for(params, self.problem)
    }
}

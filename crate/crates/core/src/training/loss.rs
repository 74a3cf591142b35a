use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Plain, Recorder, Tape};
use crate::error::{contract, Result};
use crate::geometry::{CollocationSet, DomainSpec, PointKind, TrainingPoint};
use crate::model::{forward_jet, MlpConfig};
use crate::physics::{bc_residual, ns_residual, FluidParams, PdeVariant};

/// Points per sequential block in parallel reductions. Fixed so that the
/// summation order does not depend on the thread count.
const CHUNK: usize = 16;

/// Everything needed to evaluate residuals besides parameters and points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinnProblem {
    pub domain: DomainSpec,
    pub fluid: FluidParams,
    pub variant: PdeVariant,
    pub model: MlpConfig,
}

/// Raw squared-residual sum at one collocation point.
pub fn point_loss<R: Recorder>(
    rec: &mut R,
    params: &[R::Scalar],
    tp: &TrainingPoint,
    problem: &PinnProblem,
) -> Result<R::Scalar> {
    let f = forward_jet(rec, params, tp.point, &problem.model)?;
    Ok(match tp.kind {
        PointKind::Interior => {
            let r = ns_residual(rec, &f, &problem.fluid, problem.variant);
            rec.sum_squares(&r.components())
        }
        PointKind::Boundary(seg) => {
            let r = bc_residual(rec, tp.point, seg, &f, &problem.fluid, &problem.domain)?;
            rec.sum_squares(&r)
        }
    })
}

/// Raw point loss and its exact parameter gradient.
pub fn point_loss_grad(params: &[f64], tp: &TrainingPoint, problem: &PinnProblem) -> Result<(f64, Vec<f64>)> {
    with_tape(|tape| {
        let vars = tape.leaves(params);
        let out = point_loss(tape, &vars, tp, problem)?;
        let mut adj = tape.adjoints(out)?;
        adj.truncate(params.len());
        Ok((tape.value(out), adj))
    })
}

thread_local! {
    static SCRATCH: RefCell<Tape> = RefCell::new(Tape::with_capacity(4096, 8192));
}

/// Runs `f` on this thread's scratch tape, reset beforehand.
pub(crate) fn with_tape<T>(f: impl FnOnce(&mut Tape) -> T) -> T {
    SCRATCH.with(|cell| {
        let mut tape = cell.borrow_mut();
        tape.reset();
        f(&mut tape)
    })
}

#[derive(Debug, Clone)]
pub struct WeightedEval {
    /// Raw point losses, in point order.
    pub point_losses: Vec<f64>,
    /// `sum_i coef_i * loss_i`.
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Value and gradient of `sum_i coefs[i] * loss_i`.
///
/// Points are processed in parallel in fixed-size blocks; block results are
/// combined in index order, so the result is bit-identical across runs and
/// thread counts. Points with a zero coefficient skip the reverse sweep.
pub fn weighted_loss_grad(
    params: &[f64],
    points: &[TrainingPoint],
    coefs: &[f64],
    problem: &PinnProblem,
) -> Result<WeightedEval> {
    if points.len() != coefs.len() {
        return Err(contract("weighted_loss_grad: points and coefficients differ in length"));
    }
    let p = params.len();
    let blocks: Vec<Result<(Vec<f64>, f64, Vec<f64>)>> = points
        .par_chunks(CHUNK)
        .zip(coefs.par_chunks(CHUNK))
        .map(|(pts, cs)| {
            let mut losses = Vec::with_capacity(pts.len());
            let mut value = 0.0;
            let mut grad = vec![0.0; p];
            for (tp, &c) in pts.iter().zip(cs) {
                if c == 0.0 {
                    losses.push(point_loss(&mut Plain, params, tp, problem)?);
                    continue;
                }
                let (l, g) = point_loss_grad(params, tp, problem)?;
                losses.push(l);
                value += c * l;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += c * gi;
                }
            }
            Ok((losses, value, grad))
        })
        .collect();
    let mut out = WeightedEval {
        point_losses: Vec::with_capacity(points.len()),
        value: 0.0,
        grad: vec![0.0; p],
    };
    for block in blocks {
        let (losses, value, grad) = block?;
        out.point_losses.extend(losses);
        out.value += value;
        for (acc, g) in out.grad.iter_mut().zip(&grad) {
            *acc += g;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_pde: f64,
    pub l_bc: f64,
    pub total: f64,
    /// `(point index, w_i * loss_i / N)`; these sum to `total`.
    pub per_point: Vec<(usize, f64)>,
}

fn check_groups(colloc: &CollocationSet) -> Result<()> {
    if colloc.n_pde() == 0 || colloc.n_bc() == 0 {
        return Err(contract("composite loss needs at least one interior and one boundary point"));
    }
    Ok(())
}

fn breakdown(colloc: &CollocationSet, losses: &[f64]) -> LossBreakdown {
    let n = colloc.len() as f64;
    let w_pde = colloc.weight_for(PointKind::Interior);
    let w_bc = n / colloc.n_bc() as f64;
    let npde = colloc.n_pde();
    let l_pde = losses[..npde].iter().sum::<f64>() / npde as f64;
    let l_bc = losses[npde..].iter().sum::<f64>() / colloc.n_bc() as f64;
    let per_point = losses
        .iter()
        .enumerate()
        .map(|(i, l)| (i, if i < npde { w_pde } else { w_bc } * l / n))
        .collect();
    LossBreakdown {
        l_pde,
        l_bc,
        total: l_pde + l_bc,
        per_point,
    }
}

/// `L = L_pde + L_bc`, each the mean squared residual over its group.
pub fn composite_loss(params: &[f64], colloc: &CollocationSet, problem: &PinnProblem) -> Result<LossBreakdown> {
    check_groups(colloc)?;
    let points = colloc.points();
    let losses: Vec<f64> = points
        .par_iter()
        .map(|tp| point_loss(&mut Plain, params, tp, problem))
        .collect::<Result<_>>()?;
    Ok(breakdown(colloc, &losses))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub l_pde: f64,
    pub l_bc: f64,
    pub total: f64,
    pub grad: Vec<f64>,
}

/// Composite loss and its exact gradient.
pub fn loss_and_grad(params: &[f64], colloc: &CollocationSet, problem: &PinnProblem) -> Result<Evaluation> {
    check_groups(colloc)?;
    let n = colloc.len() as f64;
    let points = colloc.points();
    let coefs: Vec<f64> = points.iter().map(|tp| colloc.weight_for(tp.kind) / n).collect();
    let eval = weighted_loss_grad(params, &points, &coefs, problem)?;
    let b = breakdown(colloc, &eval.point_losses);
    Ok(Evaluation {
        l_pde: b.l_pde,
        l_bc: b.l_bc,
        total: b.total,
        grad: eval.grad,
    })
}

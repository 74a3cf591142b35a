use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::{adam_step, lbfgs_optimize, loss_and_grad, AdamState, LbfgsOptions, PinnProblem};
use crate::error::{Error, Result};
use crate::geometry::CollocationSet;
use crate::model::{Checkpoint, ParamVector, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub adam_steps: usize,
    pub adam_lr: f64,
    pub lbfgs_steps: usize,
    pub lbfgs_memory: usize,
    /// Accepted for schema compatibility; full-batch training draws no randomness.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam_steps: 5000,
            adam_lr: 1e-3,
            lbfgs_steps: 500,
            lbfgs_memory: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam_lr > 0.0 && self.adam_lr.is_finite()) {
            return Err(Error::InvalidConfig {
                field: "train.adam_lr".into(),
                reason: "must be positive".into(),
            });
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::InvalidConfig {
                field: "train.lbfgs_memory".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub phase: Phase,
    pub l_pde: f64,
    pub l_bc: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainTrail {
    pub params: ParamVector,
    pub history: Vec<LossRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainTrail {
    pub fn final_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints.iter().rev().find(|c| c.phase == Phase::Final)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.total)
    }

    /// Loss history as CSV: `step,phase,l_pde,l_bc,total`.
    pub fn history_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "phase", "l_pde", "l_bc", "total"])?;
        for r in &self.history {
            w.write_record([
                r.step.to_string(),
                r.phase.name().to_string(),
                format!("{:?}", r.l_pde),
                format!("{:?}", r.l_bc),
                format!("{:?}", r.total),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn cadence(steps: usize) -> usize {
    steps.div_ceil(10).max(1)
}

/// Adam for `config.adam_steps`, then L-BFGS for up to `config.lbfgs_steps`.
///
/// Checkpoints are taken at every tenth of each phase and at the end, the
/// last one tagged `tag` with phase `final`. Each checkpoint is handed to
/// `sink` as soon as it exists, so an abort leaves the partial trail on disk.
/// The trail is returned alongside the outcome either way.
pub fn train(
    config: &TrainConfig,
    problem: &PinnProblem,
    colloc: &CollocationSet,
    init: ParamVector,
    tag: &str,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> (TrainTrail, Result<()>) {
    let mut trail = TrainTrail {
        params: init,
        history: Vec::new(),
        checkpoints: Vec::new(),
    };
    let outcome = run(config, problem, colloc, tag, &mut trail, sink);
    (trail, outcome)
}

fn emit(
    trail: &mut TrainTrail,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
    problem: &PinnProblem,
    tag: &str,
    phase: Phase,
    step: usize,
) -> Result<()> {
    let ck = Checkpoint::new(problem.model, &trail.params, tag, phase, step);
    sink(&ck)?;
    trail.checkpoints.push(ck);
    Ok(())
}

fn run(
    config: &TrainConfig,
    problem: &PinnProblem,
    colloc: &CollocationSet,
    tag: &str,
    trail: &mut TrainTrail,
    sink: &mut dyn FnMut(&Checkpoint) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    problem.model.validate()?;
    emit(trail, sink, problem, tag, Phase::Init, 0)?;

    let every = cadence(config.adam_steps);
    let mut state = AdamState::new(trail.params.len());
    for step in 1..=config.adam_steps {
        let e = loss_and_grad(trail.params.as_slice(), colloc, problem)?;
        if !e.total.is_finite() {
            return Err(Error::NonFinite {
                iteration: step,
                last_finite: trail.params.0.clone(),
            });
        }
        trail.history.push(LossRecord {
            step: step - 1,
            phase: Phase::Adam,
            l_pde: e.l_pde,
            l_bc: e.l_bc,
            total: e.total,
        });
        adam_step(&mut trail.params.0, &e.grad, &mut state, config.adam_lr)?;
        if step % every == 0 {
            emit(trail, sink, problem, tag, Phase::Adam, step)?;
        }
    }

    if config.lbfgs_steps > 0 {
        let opts = LbfgsOptions {
            max_iters: config.lbfgs_steps,
            memory: config.lbfgs_memory,
            ..LbfgsOptions::default()
        };
        let last = Cell::new((0.0, 0.0));
        let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let e = loss_and_grad(x, colloc, problem)?;
            last.set((e.l_pde, e.l_bc));
            Ok((e.total, e.grad))
        };
        let every = cadence(config.lbfgs_steps);
        let mut pending: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut records = Vec::new();
        let result = lbfgs_optimize(trail.params.as_slice(), objective, &opts, |it, x, value| {
            let (l_pde, l_bc) = last.get();
            records.push(LossRecord {
                step: it,
                phase: Phase::Lbfgs,
                l_pde,
                l_bc,
                total: value,
            });
            if it % every == 0 {
                pending.push((it, x.to_vec()));
            }
        });
        trail.history.extend(records);
        let lbfgs_params = std::mem::replace(&mut trail.params.0, Vec::new());
        for (it, x) in pending {
            trail.params.0 = x;
            emit(trail, sink, problem, tag, Phase::Lbfgs, it)?;
        }
        match result {
            Ok(report) => trail.params.0 = report.params,
            Err(Error::NonFinite { iteration, last_finite }) => {
                trail.params.0 = last_finite.clone();
                return Err(Error::NonFinite { iteration, last_finite });
            }
            Err(e) => {
                trail.params.0 = lbfgs_params;
                return Err(e);
            }
        }
    }

    let steps = config.adam_steps + trail.history.iter().filter(|r| r.phase == Phase::Lbfgs).count();
    let e = loss_and_grad(trail.params.as_slice(), colloc, problem)?;
    trail.history.push(LossRecord {
        step: steps,
        phase: Phase::Final,
        l_pde: e.l_pde,
        l_bc: e.l_bc,
        total: e.total,
    });
    emit(trail, sink, problem, tag, Phase::Final, steps)
}

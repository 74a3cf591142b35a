//! Composite PINN loss and the two-phase optimizer (Adam, then L-BFGS).

mod adam;
mod lbfgs;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use lbfgs::{lbfgs_optimize, LbfgsOptions, LbfgsReport, Termination};
pub use loss::{
    composite_loss, loss_and_grad, point_loss, point_loss_grad, weighted_loss_grad, Evaluation,
    LossBreakdown, PinnProblem, WeightedEval,
};
pub(crate) use loss::with_tape;
pub use trainer::{train, LossRecord, TrainConfig, TrainTrail};

//! Physics-informed neural networks for steady 2D flow past a cylinder, with
//! influence-function attribution of model behavior to collocation points.

pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod indicators;
pub mod influence;
pub mod model;
pub mod physics;
pub mod stats;
pub mod training;

pub use error::{Error, Result};

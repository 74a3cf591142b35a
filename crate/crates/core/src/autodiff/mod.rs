//! Second-order input jets and a reverse-mode tape over network parameters.
//!
//! Every jet component is an ordinary scalar of some [`Recorder`]. With
//! [`Plain`] the scalars are bare `f64` values; with a [`Tape`] each scalar
//! is a recorded node, so the parameter gradient of any quantity built from
//! jet components (including second spatial derivatives) comes out of a
//! single reverse sweep.

mod activation;
mod jet;
mod tape;

pub use activation::Activation;
pub(crate) use jet::jet_dense;
pub use jet::{jet_activation, jet_linear, Jet2};
pub use tape::{Plain, Recorder, Tape, Var};

//! Multi-task human trajectory and intention prediction for human-robot
//! collaboration.
//!
//! The crate contains:
//!
//! - [`numeric`]: a small dense tensor type with a tape-based reverse-mode
//!   differentiator, seeded randomness and gradient checking.
//! - [`model`]: a GRU encoder, an attention GRU decoder producing a future
//!   wrist trajectory, and an attention-pooled intention classifier.
//! - [`training`]: the joint classification/regression loss, Adam, the
//!   training loop and evaluation metrics.
//! - [`adaptation`]: nonlinear recursive least-squares parameter adaptation
//!   (an EKF-style recursion over network weights) with k-step stacking and
//!   prequential online replay.
//! - [`data`]: trajectory CSV I/O, Kalman smoothing, windowing, splits and a
//!   synthetic multi-subject reach generator.
//! - [`taskgraph`]: an and-or task graph DSL with trace validation.
//! - [`cli`]: the command-line experiment harness.

pub mod adaptation;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod numeric;
pub mod taskgraph;
pub mod training;

pub use error::{Error, Result};

//! Residual networks stepped with classical RK4 and trained on dynamical
//! system data under algebraic constraints.
//!
//! The constraint can be honoured four ways: an auxiliary loss term, a
//! penalty term that flows the latent state towards the constraint
//! manifold, an iterative projection of the final output, or a projection
//! of the latent state after every layer.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

//! Finite-volume simulation of a thin liquid film carrying an insoluble
//! surfactant, for both the degenerate system and its regularization.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod constitutive;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod helmholtz;
mod quadrature;
pub mod study;

pub use constitutive::{LogSign, ModelParams, SigmaModel};
pub use dynamics::{Scheme, State, StepControl};
pub use error::{Error, Result};
pub use grid::{FaceField, Field, Grid};

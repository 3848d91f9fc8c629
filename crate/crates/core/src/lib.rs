//! Non-collision probabilities for interacting planar particles among
//! rectangular obstacles: geometry, obstacle grouping, the collision-matrix
//! spectrum, barrier potentials, Monte Carlo dynamics, survival estimation and
//! closed-form lower bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= y)` deliberately rejects NaN

pub mod bounds;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod grouping;
pub mod potential;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};

//! Adaptive piecewise-linear finite elements with regularized
//! pseudo-transient continuation for quasilinear convection-diffusion.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fem;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod sparse;
pub mod adaptivity;
pub mod solver;
pub mod cli;

//! Certification toolkit for the proximal gradient method on box-constrained
//! strongly convex QPs executed in signed fixed-point arithmetic.

#![allow(clippy::needless_range_loop)]

pub mod fixedpoint;
pub mod guarantee;
pub mod linalg;
pub mod mpc;
pub mod pgm;
pub mod qp;
pub mod rational;
pub mod certify;
pub mod cli;

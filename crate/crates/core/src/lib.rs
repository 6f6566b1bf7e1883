//! Steady-state purity analysis of cascaded open quantum harmonic oscillators.
//!
//! The crate computes invariant covariances of series-connected linear quantum
//! systems, the log-determinant purity functional and its derivatives with respect
//! to the energy and coupling matrices, sensitivity indices under parameter
//! uncertainty, and symplectic coordinate changes that minimise those indices.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balancing;
pub mod cascade;
pub mod cli;
pub mod error;
pub mod matcore;
pub mod reference;
pub mod report;
pub mod sensitivity;
pub mod spec_file;
pub mod steadystate;
pub mod ticascade;

pub use error::{Error, Result};

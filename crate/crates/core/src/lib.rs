//! Weighted block-sparse recovery: optimal weights from block priors,
//! sample-complexity bounds, and the weighted group-lasso solver.
//!
//! The crate is organized around three questions:
//!
//! 1. **What weights should a weighted `ℓ1,2` recovery program use when
//!    block activation probabilities are known?** [`weights`] solves the
//!    scalar optimality condition per block (Model 1: a probability per
//!    block) or per index set (Model 2: a few sets with known accuracies).
//! 2. **How many measurements does recovery then need?** [`statdim`]
//!    evaluates the statistical-dimension upper bound of the descent cone,
//!    its prior-averaged forms, and a Monte-Carlo estimator for validating
//!    both.
//! 3. **Does it work on data?** [`recovery`] solves the weighted program
//!    itself (real or complex, single or joint-sparse measurement
//!    vectors), [`doa`] builds the broadband direction-of-arrival frontend
//!    that exercises Model 2, and [`harness`] runs the phase-transition and
//!    DOA experiments end to end.
//!
//! Everything numeric is generic over the real scalar through
//! [`scalar::Real`] (implemented for `f32`/`f64`) and, where matrices
//! appear, over real/complex entries through [`scalar::Scalar`]. The
//! aliases below fix the default double-precision instantiations.

// Coefficient tables and pinned reference constants keep every digit of
// their source values, and validation guards use `!(x > 0)` so that NaN
// fails closed.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod doa;
pub mod error;
pub mod harness;
mod linalg;
pub mod model;
pub mod recovery;
pub mod scalar;
mod solve1d;
pub mod specfun;
pub mod statdim;
pub mod weights;

pub use error::{Error, Result};

/// Default real scalar for library entry points.
pub type Real64 = f64;
/// Default complex scalar (measurement matrices, DOA steering vectors).
pub type Complex64 = num_complex::Complex<f64>;

/// Block structure over `ℝ^n`/`ℂ^n` at double precision.
pub type BlockPartition = model::BlockPartition;
/// Per-block activation prior at double precision.
pub type PriorModel1 = model::PriorModel1<f64>;
/// Set/accuracy prior at double precision.
pub type PriorModel2 = model::PriorModel2<f64>;
/// Per-block weights at double precision.
pub type WeightVector = model::WeightVector<f64>;
/// Per-set weights at double precision.
pub type LambdaVector = model::LambdaVector<f64>;

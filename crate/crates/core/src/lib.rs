//! Weighted total generalized variation (TGV) denoising.

// `!(x > 0.0)` is how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bilevel_dual;
pub mod bilevel_pd;
pub mod cli;
pub mod config;
pub mod descent;
pub mod error;
pub mod field;
pub mod gridsearch;
pub mod history;
pub mod io;
pub mod lower_dual;
pub mod lower_pd;
pub mod metrics;
pub mod operators;
pub mod projection;
pub mod smoothing;
pub mod sparse;
pub mod synth;
pub mod upper;

pub use error::{Result, TgvError};
pub use field::{GridMode, GridSpec, ScalarField, SymTensorField, VectorField};
pub use sparse::{Boundary, Factorization, SparseOperator};

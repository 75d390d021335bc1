//! Spectral analysis of embeddings of Müntz spaces into `L^2(mu)`.

// `!(x >= 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constructions;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod logspace;
pub mod lp;
pub mod measures;
pub mod quadrature;
pub mod sequences;
pub mod special;
pub mod suites;

pub use error::{Error, Result};
pub use measures::{Measure, MeasureSpec, ModulusReport, PowerMajorant, TailMajorant};
pub use sequences::{LambdaSequence, SequenceSpec};

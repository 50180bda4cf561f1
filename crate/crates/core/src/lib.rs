//! Markov-modulated Brownian motion (MMBM) reflected into a strip `[0, B]`.
//!
//! The crate computes first-passage matrices, stationary and
//! exponential-epoch distributions of the doubly reflected process, the
//! transforms of the process observed at inverse local times, and the
//! long-run overflow / unused-capacity rates. A Monte Carlo simulator of the
//! two-sided Skorokhod reflection is included so that every analytic quantity
//! can be cross-checked against sample paths.
//!
//! The analytic modules are generic over the scalar type (`f32` or `f64`, see
//! [`Scalar`]); the aliases at the crate root fix the scalar to `f64`, which is
//! what the CLI and the simulator use.
//!
//! ```
//! use mmbm::{Model, passage::{passage_matrices, Direction}};
//!
//! // Single Brownian state with drift -1 and unit variance.
//! let model = Model::brownian(-1.0, 1.0).unwrap();
//! let up = passage_matrices(&model, 0.0, Direction::Up).unwrap();
//! assert!((up.lambda[(0, 0)] + 2.0).abs() < 1e-12);
//! ```

// `!(x > 0)` is the NaN-rejecting form used for argument checks throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod error;
pub mod linalg;
pub mod localtime;
pub mod model;
pub mod passage;
pub mod reflection;
pub mod scalar;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

/// Dense matrix over `f64`.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector over `f64`.
pub type Vector = nalgebra::DVector<f64>;

pub type Model = model::MmbmModel<f64>;
pub type Phases = model::PhaseClasses;
pub type Spectrum = linalg::SpectralData<f64>;
pub type Passage = passage::PassagePair<f64>;
pub type PassageSet = passage::FirstPassage<f64>;
pub type Crossing = reflection::CrossingMatrices<f64>;
pub type Strip = reflection::StripSpec<f64>;
pub type Law = reflection::ReflectedLaw<f64>;
pub type LocalTime = localtime::LocalTimeTransform<f64>;
pub type Overflow = localtime::OverflowRates<f64>;

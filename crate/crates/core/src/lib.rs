//! Learning-curve estimation for logistic-regression classifiers.
//!
//! The crate estimates `τ(m)`, the expected misclassification rate of a
//! logistic-regression rule trained on `m` samples, from one observed
//! training set. Three estimators are provided:
//!
//! * **SUBEX** ([`subex`]): subsample the data at sizes below `n`, estimate
//!   the error directly, and extrapolate an inverse power law.
//! * **IMPINT** ([`impint`]): fit models for the covariates and for the label
//!   given the covariates, then simulate training and test sets of any size.
//! * **BRIE** ([`impint::brie_curve`]): IMPINT shifted so that its value at
//!   `n - 1` equals the leave-one-out error.
//!
//! [`harness`] contains the Monte-Carlo study engine used to evaluate the
//! estimators against known generative models.

pub mod covariate;
pub mod curve;
pub mod csvio;
mod error;
pub mod harness;
pub mod impint;
pub mod logistic;
pub mod numerics;
pub mod subex;

pub use covariate::{CovariateModel, ModelKind};
pub use curve::{delta_estimate, CurvePoint, LearningCurve, Provenance};
pub use error::{Error, Result};
pub use logistic::{Dataset, FitOptions, LogisticFit, Rule};
pub use numerics::{RngStream, SymMatrix};

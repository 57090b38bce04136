//! Estimation of the false-positive ratio of chronic-disease diagnoses in
//! aggregated claims data.
//!
//! Observed prevalence from two surveys, observed incidence, general
//! mortality and the mortality rate ratio are smoothed ([`linkfit`]), then
//! for each sampled sensitivity the specificity that balances the
//! illness-death prevalence law along each cohort is solved
//! ([`illnessdeath`], [`montecarlo`]). [`aggregate`] turns the resulting
//! ratios into counts of falsely diagnosed people. [`synthdata`] generates
//! datasets with known accuracy for round-trip checks.
//!
//! The numerical core is generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which the pipeline uses throughout.

// Negated comparisons are how NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod datamodel;
pub mod illnessdeath;
pub mod linalg;
pub mod linkfit;
pub mod montecarlo;
pub mod pipeline;
pub mod roots;
pub mod scalar;
pub mod surfaces;
pub mod synthdata;

pub use scalar::Real;

pub type Accuracy = illnessdeath::AccuracyPair<f64>;
pub type EpiState = illnessdeath::EpiPoint<f64>;
pub type Characteristic = illnessdeath::CharacteristicInputs<f64>;
pub type Surface = linkfit::FittedSurface<f64>;
pub type Basis = linkfit::BasisSpec<f64>;
pub type Curve = aggregate::AgeCurve<f64>;

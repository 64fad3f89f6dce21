//! Offline evaluation of recommender systems on closed-loop feedback.
//!
//! The crate reads interaction logs, fits a power-law popularity model to
//! obtain per-item observation propensities, partitions items into
//! propensity strata and evaluates recommenders with the standard holdout
//! estimator, inverse propensity scoring and a stratified estimator that
//! averages per-stratum accuracy by feedback share.

pub mod corpus;
pub mod error;
pub mod evaluators;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod propensity;
pub mod simulator;
pub mod stats;
pub mod strata;

pub use error::{Error, Result};

// The book's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/propensity.md")]
    mod propensity {}
    #[doc = include_str!("../../../book/src/strata.md")]
    mod strata {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/workbench.md")]
    mod workbench {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

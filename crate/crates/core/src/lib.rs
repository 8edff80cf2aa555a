//! Variational quantum classifiers on a dense statevector simulator, and
//! functional-ANOVA hyperparameter importance over a random-forest surrogate.
//!
//! Pipeline: [`space`] samples configurations, [`trainer`] trains each one
//! with cross-validation on a [`data`] set, [`forest`] fits and gates the
//! surrogate, [`fanova`] decomposes its variance, and [`verification`]
//! cross-checks the ranking with surrogate-driven random search.
//! [`orchestrator`] ties the stages to files on disk.

pub mod circuit;
pub mod data;
pub mod error;
pub mod fanova;
pub mod forest;
pub mod orchestrator;
pub mod par;
pub mod seed;
pub mod space;
pub mod stats;
pub mod statevector;
pub mod trainer;
pub mod verification;

pub use error::{Error, Result};

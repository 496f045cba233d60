//! Mediation pathway testing in linear Gaussian DAG models.
//!
//! The crate decides, mediator by mediator, whether an exposure influences
//! an outcome through that mediator in a linear structural equation model
//! with equal error variances. Path existence is phrased in a max-min
//! matrix algebra, so a mediator carries an effect exactly when both the
//! exposure-to-mediator and mediator-to-outcome closure entries are
//! nonzero; cancellation among parallel paths cannot hide a pathway.
//!
//! The pipeline splits the sample, learns a candidate graph on one half,
//! re-estimates every retained edge on the other half with a decorrelated
//! score, and calibrates the resulting path statistics with a multiplier
//! bootstrap. Multiple-testing control over all mediators combines a
//! screening step with a Benjamini-Yekutieli correction.
//!
//! Node convention throughout: column 0 is the exposure, columns 1..=d are
//! mediators, column d+1 is the outcome.

pub mod bench;
pub mod boolmat;
pub mod boot;
pub mod cli;
pub mod dagfit;
pub mod dataset;
pub mod debias;
pub mod error;
pub mod mediate;
pub mod sem;

mod linalg;
mod seeding;

pub use error::{Error, Result};

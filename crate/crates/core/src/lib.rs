//! Clustering and selective labelling for plant descriptor datasets.
//!
//! Given per-image descriptor vectors grouped by physical plant, this crate
//! clusters the unlabelled training split, selects exemplar images for a
//! human (or simulated) labeller, spreads the exemplar labels to every
//! image, trains a softmax classifier on the result and reports labelling
//! and classification accuracy against the fraction of data labelled.
//!
//! Modules follow the pipeline: [`dataset`] and [`synthetic`] handle data,
//! [`affinity`] builds the pairwise matrices, [`clustering`] groups samples,
//! [`labelling`] turns exemplar labels into full label assignments,
//! [`classifier`] is the deployable stage, and [`harness`] runs the
//! strategy matrix and writes reports.

pub mod affinity;
pub mod classifier;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod labelling;
pub mod seeding;
pub mod synthetic;

pub use error::{Error, Result};

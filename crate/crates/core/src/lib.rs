//! Electrophysiology feature-family pipeline for transcriptomic subclass prediction.
//!
//! Cells carry 12 ordered feature families. Two model routes are provided:
//!
//! - a per-family sparse PCA featurization feeding a class-balanced random forest
//!   ([`spca`], [`forest`]);
//! - a bidirectional LSTM over the 12 family steps with additive attention pooling and
//!   softmax or angular-margin heads ([`seqnet`]), plus shared-encoder two-species
//!   training and fine-tuning ([`transfer`]).
//!
//! Everything is seeded and single-threaded per run, so identical inputs give bit-identical
//! outputs.

pub mod dataset;
pub mod error;
pub mod forest;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod sampling;
pub mod schema;
pub mod seqnet;
pub mod spca;
pub mod synth;
pub mod transfer;

pub use dataset::{to_sequence, CellSequence, Dataset};
pub use error::{Error, Result};
pub use schema::{harmonize_labels, FamilySchema, LabelSpace, Species};

//! Concept-drift evaluation for time-stamped text classification.
//!
//! The pipeline: [`ingest`] resolves multi-annotator votes into a labeled
//! corpus, [`timeline`] slices it into fixed-length bins and sliding
//! training windows, [`experiment`] trains one model per (repeat, window)
//! and scores it on every later bin, and [`metrics`] aggregates the scores
//! with bootstrap intervals. [`diagnostics`] and [`sentiment`] cover
//! corpus-level drift indicators and weekly sentiment indices; [`synth`]
//! generates corpora with controlled drift.

pub mod adapter;
pub mod bow;
pub mod diagnostics;
pub mod experiment;
pub mod ingest;
pub mod label;
pub mod metrics;
pub mod seed;
pub mod sentiment;
pub mod synth;
pub mod timefmt;
pub mod timeline;

pub use label::Label;

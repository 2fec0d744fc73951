//! Configuration, file formats, plots and the stage driver of the
//! delay-Doppler tracking toolkit. The algorithms live in `ddtrack-core`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod formats;
pub mod pipeline;
pub mod plot;

pub use config::{ExperimentConfig, Profile};
pub use pipeline::{run_stage, Layout, Stage, StageError};

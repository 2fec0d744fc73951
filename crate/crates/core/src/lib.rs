//! Allocation-only core of the delay-Doppler tracking toolkit.
//!
//! Everything in this crate is pure computation over in-memory data: bistatic
//! scene geometry, OFDM channel synthesis, the delay-Doppler transform, 2-D
//! OS-CFAR, delay-Doppler graph construction, the EvolveGCN node classifier
//! with its reverse-mode gradients, the DBSCAN/GNN/Kalman baseline tracker and
//! the masked error metrics. File formats, configuration and the CLI live in
//! the `ddtrack` companion crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod baseline;
pub mod channel;
pub mod ddmap;
pub mod detect;
mod error;
pub mod fft;
pub mod graph;
pub(crate) mod math;
pub mod metrics;
pub mod rng;
pub mod scene;
pub mod tgnn;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

//! Screening toolkit for retired lithium-ion packs.
//!
//! * [`ecm`] simulates a 2P5S pack of lumped Thevenin cell groups.
//! * [`protocol`] defines the characterization tests and runs them.
//! * [`fleet`] generates aged pack populations with known ground truth.
//! * [`ingest`] reads and writes the cycler log CSV format.
//! * [`analysis`] extracts ohmic resistance from current steps, measures
//!   windowed capacity, fits capacity against resistance and screens cells.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ecm;
pub mod error;
pub mod fleet;
pub mod ingest;
pub mod log;
pub mod protocol;

pub use error::{Error, Result};

//! Channel charting anchored to a digital twin.
//!
//! A multipath ray model produces CSI for a walking user and for a grid of
//! reference points. A neural network maps measured CSI to a probability
//! vector over the grid; its expected position is trained with a triplet
//! loss on timestamps and an angular match between measured and twin
//! large-scale features.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod features;
pub mod geom;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};

//! Simulation, reconstruction and evaluation front end for polarimetric
//! deflectometry, built on `polardeflect-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod cli;
pub mod error;
pub mod fft;
pub mod manifest;
pub mod pfm;
pub mod pipeline;
pub mod ply;
pub mod record;

pub use error::{Error, Result};

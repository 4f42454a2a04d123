//! Polarimetric deflectometry core.
//!
//! Recovers per-pixel depth and surface normals of specular objects by
//! combining a display-camera correspondence (deflectometry) with the
//! incidence angle implied by the degree of linear polarization of the
//! reflected light. Everything here is pure computation over in-memory
//! rasters; file formats, parallel drivers and the command line live in the
//! `polardeflect` crate.
//!
//! The crate is `no_std` and only needs `alloc`. Transcendental functions go
//! through `libm`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codec;
pub mod geometry;
mod linalg;
pub mod metrics;
pub mod polarization;
pub mod raster;
pub mod reconstruct;
pub mod simulator;
mod sum;

pub use geometry::{DisplayPlane, GeometryError, Mat3, PinholeCamera, RigidTransform, Vec3, WorkingDistance};
pub use polarization::{DopModel, OpticalMaterial, StokesEstimate};
pub use raster::Raster;

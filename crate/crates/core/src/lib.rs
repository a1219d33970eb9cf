//! Computations with meromorphic quadratic differentials with higher-order
//! poles and numerical harmonic maps into the Poincaré disk.
//!
//! The crate is split by subject:
//!
//! - [`qdiff`]: Laurent data, principal parts, residues, symmetrization.
//! - [`flatgeom`]: the singular-flat `|q||dz|²` metric, trajectories and
//!   polygonal exhaustions around the pole.
//! - [`hypgeom`]: Poincaré-disk isometries, ideal polygons, crowns.
//! - [`bochner`]: finite-difference solver for `Δw = e^{2w} − e^{−2w}|q|²`.
//! - [`hmap`]: image lengths and curvature, discrete harmonic maps into the
//!   disk, Hopf differentials, the partially free problem and twists.
//! - [`cli`]: job configuration, reports and the built-in check suite.

pub mod bochner;
pub mod cli;
pub mod error;
pub mod flatgeom;
pub mod hmap;
pub mod hypgeom;
pub mod poly;
pub mod qdiff;
pub mod svg;

pub use error::{Error, Result};
pub use num_complex::Complex64;

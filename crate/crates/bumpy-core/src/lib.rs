//! Numerics for Stokes and Navier-Stokes flow over periodic rough boundaries: geometry,
//! no-slip polynomial bases, a staggered-grid Stokes solver with a transparent top
//! closure, boundary-layer correctors, excess functionals, and supporting checks.

pub mod bogovskii;
pub mod boundary_layers;
pub mod dtn;
pub mod error;
pub mod excess;
pub mod field;
pub mod fft2;
pub mod fit;
pub mod geometry;
pub mod green;
pub mod grid;
pub mod iteration;
pub mod krylov;
pub mod linalg;
pub mod navier_stokes;
pub mod polynomials;
pub mod stokes;

pub use error::{BumpyError, Result};

//! Spectral solver and verification harness for the anisotropic Stokes and
//! Navier-Stokes equations and the primitive equations on the periodic layer
//! T² × (−1, 1) with no-slip walls.
//!
//! Horizontal directions are Fourier modes `|n1|, |n2| <= N_h`; the vertical
//! direction uses Chebyshev–Gauss–Lobatto collocation. Operators are scaled
//! with `∇_ε = (∂1, ∂2, ∂3/ε)`.

pub mod error;
pub mod symbols;
pub mod fields;
pub mod projections;
pub mod resolvent;
pub mod functional_calculus;
pub mod dynamics;
pub mod harness;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

//! Numerical laboratory for complex geometrical optics solutions of the
//! two-dimensional Schrödinger equation with partial Cauchy data.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: the disk, its boundary partition Γ₀/Γ̃ and the polar quadrature.
//! - [`transforms`]: Cauchy transforms ∂_z̄⁻¹, ∂_z⁻¹ and the conjugated operators R_{Φ,τ}, R̃_{Φ,τ}.
//! - [`holo`]: holomorphic amplitudes and phases with validated critical sets.
//! - [`pde`]: Dirichlet solves, Cauchy data and Carleman-weighted problems.
//! - [`cgo`]: the layered CGO solutions u₁ and v.
//! - [`analysis`]: stationary phase, the orthogonality identity and pointwise recovery.
//! - [`experiment`]: configuration-driven runners behind the `cgolab` binary.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and can be forced sequential at runtime.

pub mod analysis;
pub mod cgo;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod expr;
pub mod geometry;
pub mod holo;
pub mod numeric;
pub mod pde;
pub mod polar;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

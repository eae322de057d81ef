//! Numerical laboratory for short-time growth mechanisms in incompressible
//! 2D Euler: spectral solver, annular multi-scale initial data, singular
//! integral kernels, and the diagnostics that tie them together.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`], [`field`]: periodic grids on `[-L, L)^2` and scalar fields in
//!   real/spectral form, including off-grid trigonometric evaluation.
//! - [`envelope`], [`profiles`]: radial envelopes and the annular stream
//!   profiles built from them, with closed-form derivatives.
//! - [`kernels`], [`quad`], [`axi`]: Riesz-type kernels, adaptive
//!   Gauss-Kronrod quadrature, and the axisymmetric integral conditions.
//! - [`solver`], [`tracer`]: pseudo-spectral RK4 time stepping for coupled
//!   vorticity components, Lagrangian point tracers and flow Jacobians.
//! - [`diagnostics`], [`fitting`]: inflation series, flow-expansion
//!   residuals, decoupling gaps, slope fits.
//! - [`config`], [`report`]: experiment configuration and emitted artifacts.

pub mod axi;
pub mod config;
pub mod cutoff;
pub mod diagnostics;
pub mod envelope;
pub mod field;
pub mod fitting;
pub mod grid;
pub mod kernels;
pub mod moments;
pub mod profiles;
pub mod quad;
pub mod report;
pub mod solver;
pub mod tracer;

pub use field::{RealField, SpectralField};
pub use grid::Grid;

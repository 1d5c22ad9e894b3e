//! Density of `grad S` from samples of `S`, via the power spectrum of
//! `exp(i S / tau)`.
//!
//! * [`field`]: domains, grids, the analytic test-function catalog, CSV and PGM input.
//! * [`wavefn`]: the FFT estimator and neighborhood integration.
//! * [`spa`]: stationary points, the closed-form density, and the
//!   stationary-phase approximation of the transform.
//! * [`baselines`]: finite-difference histograms, Monte Carlo, and
//!   characteristic-function inversion.
//! * [`harness`]: sweeps, error metrics, rate fits, and timing benchmarks.
//! * [`hog`]: image gradient densities and orientation histograms.

// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod density;
pub mod error;
pub mod fft;
pub mod field;
pub mod harness;
pub mod hog;
pub mod spa;
pub mod wavefn;

pub use density::{BinAxis, BinGrid, Diagnostics, GradientDensity};
pub use error::{Error, Result};
pub use field::{catalog, sample_field, BoxDomain, GridSpec, ScalarField, TestFunction};
pub use wavefn::{power_spectrum_density, BallRegion, Tau};

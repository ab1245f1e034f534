//! Nonparametric estimation of the jump density of a compound Poisson process
//! observed on a regular time grid.
//!
//! The crate is organised bottom-up:
//!
//! - [`simulate`]: jump density models, path simulation and nonzero-increment extraction.
//! - [`wavelet`]: Symlet-4 filter bank, linear binning, periodized DWT, hard thresholding.
//! - [`decompound`]: compounding weights, inverse-series coefficients, increment grouping,
//!   intensity plug-in and the order-`K` corrected estimator.
//! - [`gridmath`]: FFT convolution powers on uniform grids, used as numerical oracles.
//! - [`harness`]: Monte Carlo experiment driver and report export.

pub mod decompound;
pub mod error;
pub mod gridmath;
pub mod harness;
pub mod simulate;
pub mod wavelet;

pub use error::{Error, Result};

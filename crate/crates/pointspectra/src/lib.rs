//! Frequency-domain analysis of multivariate inhomogeneous spatial point
//! patterns.
//!
//! The library implements the full pipeline for second-order intensity
//! reweighted stationary (SOIRS) point patterns:
//!
//! * tapered discrete Fourier transforms and bias-corrected (feasible)
//!   periodograms ([`spectral`]),
//! * kernel-smoothed pseudo-spectrum estimates with two bandwidth rules,
//!   an MSE-rate rule and a cross-validated spectral divergence
//!   ([`bandwidth`]),
//! * analytic ground truth: pseudo-spectra, local spectra, and theoretical
//!   coherence built from closed-form reweighted covariances ([`theory`]),
//! * a product-shot-noise Cox simulator with closed-form second-order
//!   structure for end-to-end validation ([`sim`]),
//! * a Monte Carlo study harness with integrated bias/MSE metrics, radial
//!   averaging, and empirical coherence diagnostics ([`mod@bench`]).
//!
//! Start with the runnable examples; each one exercises a major capability:
//!
//! ```text
//! cargo run --release --example simulate_cox       # Cox presets, first moments
//! cargo run --release --example periodogram        # tapered DFT, feasible periodogram
//! cargo run --release --example smoothed_spectrum  # kernel estimates vs analytic truth
//! cargo run --release --example bandwidth_cv       # the L(b) curve and selection
//! cargo run --release --example analytic_truth     # pseudo-spectra, local spectra
//! cargo run --release --example coherence          # coherence vs a null band
//! cargo run --release --example mc_study           # IBIAS²/IMSE study table
//! cargo run --release --example reweighting        # the thinning construction
//! ```
//!
//! A thin `pointspectra` binary wraps the same entry points as `simulate`,
//! `estimate`, `theory`, and `bench` subcommands.

// NaN parameters must fail validation, hence `!(x > 0.0)` instead of `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The numeric kernels index several parallel buffers per iteration.
#![allow(clippy::needless_range_loop)]

pub mod bandwidth;
pub mod bench;
pub mod geometry;
pub mod intensity;
pub mod io;
pub mod numeric;
pub mod sim;
pub mod spectral;
pub mod taper;
pub mod theory;

pub use geometry::{
    assert_hermitian_psd, make_frequency_grid, FrequencyGrid, HermitianField, MultitypePattern,
    Window,
};
pub use taper::Taper;

//! Geometric shaping of Gray-labeled square QAM for the nonlinear fibre channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`constellation`] builds PAM level sets, square product constellations,
//!   Gray labels and the moments (including excess kurtosis) of a constellation.
//! * [`gmi`] evaluates the generalized mutual information of a bit-labeled
//!   constellation over a Gaussian channel, either by Gauss–Hermite quadrature
//!   on one quadrature component or by seeded Monte Carlo on the full 2D
//!   constellation.
//! * [`link`] is the closed-form link model: a kurtosis-dependent NLI
//!   coefficient, the optimum-SNR ratio between two modulation formats, the
//!   effective SNR versus launch power and the optimum launch power.
//! * [`shaping`] maximizes GMI over symmetric level positions with BFGS, either
//!   at a fixed SNR or with the SNR coupled to the candidate's own kurtosis.
//! * [`sweep`] evaluates launch-power sweeps over a link and fits link
//!   parameters from measured (power, SNR) pairs.

pub mod bfgs;
pub mod constellation;
pub mod error;
pub mod formats;
pub mod gmi;
pub mod link;
pub mod quadrature;
pub mod shaping;
pub mod sweep;
pub mod units;

pub use constellation::{
    gray_labeling, kurtosis_from_levels, moments, product_constellation, uniform_levels,
    Constellation, MomentSummary, PamLevels,
};
pub use error::{Error, Result};
pub use gmi::{gmi_2d, gmi_monte_carlo, gmi_quadrature_1d, ChannelSnr, GmiEstimate, GmiMethod};
pub use link::{
    effective_snr, eta_tot, kurtosis_coupled_snr, optimal_launch_power, snr_opt_ratio,
    LinkParams, NliCoefficients,
};
pub use shaping::{design_curve, optimize, OptimizerConfig, ShapingMode, ShapingProblem, ShapingResult};
pub use sweep::{fit_link_params, run_sweep, table1_report, FitReport, MeasuredSweep, SweepCurve};

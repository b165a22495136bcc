//! Spin-1/2 in a slowly precessing field coupled to a bosonic bath: decay
//! rates, Lamb shifts, averaged Bloch dynamics, the dynamical/geometric
//! phase split, and an exact small-bath propagator to check them against.
//!
//! Frequencies are in units of the field magnitude `B0` and `ħ = 1`.
//! Everything is generic over the scalar; `f64` aliases live at the root.

// `!(x > 0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod bloch;
pub mod error;
pub mod oracle;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FieldProtocol = adiabatic::FieldProtocol<f64>;
pub type SpinMatrix = adiabatic::SpinMatrix<f64>;
pub type SpectralModel = spectral::SpectralModel<f64>;
pub type SpectralKind = spectral::SpectralKind<f64>;
pub type RateSet = spectral::RateSet<f64>;
pub type BlochGenerator = bloch::BlochGenerator<f64>;
pub type BlochTrajectory = bloch::BlochTrajectory<f64>;
pub type PhaseResult = bloch::PhaseResult<f64>;
pub type WindowReport = bloch::WindowReport<f64>;
pub type BathDiscretization = oracle::BathDiscretization<f64>;
pub type Grid = oracle::Grid<f64>;
pub type OracleResult = oracle::OracleResult<f64>;
pub type ComparisonReport = oracle::ComparisonReport<f64>;

pub type FieldProtocol32 = adiabatic::FieldProtocol<f32>;
pub type SpectralModel32 = spectral::SpectralModel<f32>;
pub type RateSet32 = spectral::RateSet<f32>;
pub type BlochGenerator32 = bloch::BlochGenerator<f32>;
pub type PhaseResult32 = bloch::PhaseResult<f32>;

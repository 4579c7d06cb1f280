//! Simulation and parameter extraction for laterally excited Lamb-mode
//! resonators on thin ferroelectric films.
//!
//! The crate covers the forward path (layered-plate homogenization, S0
//! dispersion, overtone coupling weights, multi-branch equivalent-circuit
//! admittance synthesis, DC-bias tuning laws) and the inverse path
//! (resonance detection, 3-dB quality factors, damped least-squares circuit
//! fits, turning-voltage detection), plus Touchstone v1 ingestion for
//! measured one- and two-port data.
//!
//! All quantities are SI unless a name says otherwise: frequencies in Hz,
//! lengths in m, capacitances in F, admittances in S. Coupling coefficients
//! `k2` are dimensionless fractions (0.08 means 8 %).

// Validators are written `!(x > 0.0)` rather than `x <= 0.0` on purpose:
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod device;
pub mod dispersion;
pub mod extract;
pub mod materials;
pub mod touchstone;
pub mod tuning;

/// 8 / pi^2, the fraction relating motional to static capacitance for the
/// fundamental of a uniform-mode transducer; shows up wherever `k2` is
/// converted to or from a frequency pair.
pub const EIGHT_OVER_PI_SQ: f64 = 8.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// Vacuum permittivity, F/m (CODATA 2018).
pub const EPS0: f64 = 8.854_187_812_8e-12;

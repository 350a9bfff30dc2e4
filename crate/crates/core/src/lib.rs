//! Channel synthesis, sounding emulation and characterization for
//! ultra-massive MIMO links in the 6-24 GHz mid-band.
//!
//! The crate is organised along the processing chain:
//!
//! - [`geometry`], [`propagation`], [`steering`], [`mpc`], [`tensor`] and
//!   [`synth`] build geometric near/far-field channels and i.i.d. Rayleigh
//!   reference channels.
//! - [`sounding`] emulates a PN-correlation sounder with over-the-air
//!   calibration and produces CIRs and power delay profiles.
//! - [`sage`] extracts multipath components with subarray windowing.
//! - [`stats`] fits path-loss models and computes delay/angular spreads.
//! - [`newchar`] covers near-field aperture trends, spatial
//!   cross-correlation and channel hardening.
//! - [`capacity`] evaluates MIMO capacity and fits its distribution.

pub mod capacity;
pub mod error;
pub mod geometry;
pub mod mpc;
pub mod newchar;
pub mod propagation;
pub mod sage;
pub mod sounding;
pub mod stats;
pub mod steering;
pub mod synth;
pub mod tensor;

mod linalg;

pub use error::{Error, Result};
pub use geometry::{ArrayGeometry, ArrayKind, ElementPattern, Orientation};
pub use mpc::Mpc;
pub use synth::{ScenarioClass, ScenarioConfig, Wavefront};
pub use tensor::{ChannelTensor, FrequencyGrid};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default carrier frequency, Hz.
pub const DEFAULT_CARRIER_HZ: f64 = 15.0e9;

/// Default sounding bandwidth, Hz.
pub const DEFAULT_BANDWIDTH_HZ: f64 = 250.0e6;

/// Default receiver noise floor, dBm.
pub const DEFAULT_NOISE_FLOOR_DBM: f64 = -130.0;

/// Wavelength for a carrier frequency.
pub fn wavelength(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

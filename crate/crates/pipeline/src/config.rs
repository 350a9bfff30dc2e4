//! Run configuration, read from TOML. Physical quantities carry their unit
//! in the key name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umimo_core::propagation::LeafState;
use umimo_core::sounding::{DEFAULT_OVERSAMPLE, DEFAULT_PN_POLYNOMIAL, DEFAULT_PN_WIDTH};
use umimo_core::{ScenarioClass, DEFAULT_BANDWIDTH_HZ, DEFAULT_CARRIER_HZ};

use crate::error::{PipelineError, Result};
use crate::records::parse_geometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub suite: SuiteConfig,
    pub iid: IidConfig,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("umimo-out"),
            suite: SuiteConfig::default(),
            iid: IidConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

/// Synthetic measurement campaign: geometry, sounder and estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub classes: Vec<ScenarioClass>,
    pub links_per_class: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_array: String,
    pub rx_array: String,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    /// 3D link distance ranges `[min, max]`.
    pub near_field_distance_m: [f64; 2],
    pub far_field_distance_m: [f64; 2],
    pub foliage_depth_m: [f64; 2],
    pub leaf_state: LeafState,
    /// Close-in exponent of the generator path loss.
    pub generator_ple: f64,
    pub shadow_sigma_db: f64,
    pub pn_register_width: u32,
    pub pn_polynomial: u32,
    pub oversample: usize,
    /// Received signal to noise ratio per waveform sample.
    pub sounding_snr_db: f64,
    pub ripple_peak_to_peak_db: f64,
    pub ripple_period_hz: f64,
    pub chamber_distance_m: f64,
    pub sage_window_rx: usize,
    pub sage_window_tx: usize,
    pub sage_max_paths: usize,
    pub sage_dynamic_range_db: f64,
    pub capacity_snr_db: f64,
    pub gmm_max_iter: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            classes: ScenarioClass::ALL.to_vec(),
            links_per_class: 6,
            carrier_hz: DEFAULT_CARRIER_HZ,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            tx_array: "planar:4x8:0.01".into(),
            rx_array: "planar:4x4:0.01".into(),
            tx_height_m: 3.0,
            rx_height_m: 1.5,
            near_field_distance_m: [8.0, 40.0],
            far_field_distance_m: [45.0, 120.0],
            foliage_depth_m: [1.0, 8.0],
            leaf_state: LeafState::OutOfLeaf,
            generator_ple: 1.98,
            shadow_sigma_db: 1.69,
            pn_register_width: DEFAULT_PN_WIDTH,
            pn_polynomial: DEFAULT_PN_POLYNOMIAL,
            oversample: DEFAULT_OVERSAMPLE,
            sounding_snr_db: 30.0,
            ripple_peak_to_peak_db: 1.0,
            ripple_period_hz: 60e6,
            chamber_distance_m: 1.0,
            sage_window_rx: 16,
            sage_window_tx: 32,
            sage_max_paths: 20,
            sage_dynamic_range_db: 30.0,
            capacity_snr_db: 10.0,
            gmm_max_iter: 500,
        }
    }
}

/// Optional i.i.d. Rayleigh capacity reference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IidConfig {
    pub enabled: bool,
    pub n_rx: usize,
    pub n_tx: usize,
    pub draws: usize,
    pub snr_db: f64,
}

impl Default for IidConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            n_rx: 64,
            n_tx: 128,
            draws: 2000,
            snr_db: 10.0,
        }
    }
}

/// Allowed deviations used by the report's generator checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ple: f64,
    pub sigma_db: f64,
    pub iid_capacity_mean: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ple: 0.1,
            sigma_db: 0.5,
            iid_capacity_mean: 2.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.suite;
        let fail = |m: String| Err(PipelineError::Config(m));
        if !(s.carrier_hz > 1e8 && s.carrier_hz < 3e11) {
            return fail(format!("carrier_hz {} is not a plausible carrier in Hz", s.carrier_hz));
        }
        if !(s.bandwidth_hz > 0.0 && s.bandwidth_hz < s.carrier_hz) {
            return fail(format!("bandwidth_hz {} must be in (0, carrier_hz)", s.bandwidth_hz));
        }
        for (name, r) in [
            ("near_field_distance_m", s.near_field_distance_m),
            ("far_field_distance_m", s.far_field_distance_m),
            ("foliage_depth_m", s.foliage_depth_m),
        ] {
            if !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
                return fail(format!("{name} must satisfy 0 < min <= max, got {r:?}"));
            }
        }
        if s.chamber_distance_m <= 0.0 {
            return fail("chamber_distance_m must be positive".into());
        }
        if s.shadow_sigma_db < 0.0 {
            return fail("shadow_sigma_db must be non-negative".into());
        }
        if s.oversample == 0 || s.sage_max_paths == 0 || s.gmm_max_iter == 0 {
            return fail("oversample, sage_max_paths and gmm_max_iter must be >= 1".into());
        }
        parse_geometry(&s.tx_array)?;
        parse_geometry(&s.rx_array)?;
        if self.iid.enabled && (self.iid.n_rx == 0 || self.iid.n_tx == 0 || self.iid.draws < 2) {
            return fail("iid run needs non-zero dimensions and at least 2 draws".into());
        }
        Ok(())
    }
}

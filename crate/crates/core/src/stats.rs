//! Path-loss fitting, delay and angular dispersion, and PDAP grids.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::{lstsq, mean, std_pop};
use crate::mpc::Mpc;
use crate::propagation::{fspl_db, free_space_gain, LeafState};
use crate::synth::ScenarioClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossSample {
    /// 3D Tx-Rx distance, metres.
    pub distance_m: f64,
    pub pl_db: f64,
    pub scenario_class: ScenarioClass,
    pub foliage_depth_m: f64,
}

impl PathLossSample {
    pub fn new(distance_m: f64, pl_db: f64, scenario_class: ScenarioClass, foliage_depth_m: f64) -> Result<Self> {
        ensure(distance_m.is_finite() && distance_m > 0.0, || {
            Error::InvalidArgument(format!("distance must be positive, got {distance_m}"))
        })?;
        ensure(pl_db.is_finite(), || Error::InvalidArgument("path loss must be finite".into()))?;
        Ok(Self {
            distance_m,
            pl_db,
            scenario_class,
            foliage_depth_m,
        })
    }
}

/// One vegetation excess-loss observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoliageSample {
    pub depth_m: f64,
    pub freq_mhz: f64,
    pub excess_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitModel {
    Ci,
    Fi,
    Cost235Out,
    Cost235In,
}

impl FitModel {
    pub fn label(self) -> &'static str {
        match self {
            FitModel::Ci => "CI",
            FitModel::Fi => "FI",
            FitModel::Cost235Out => "COST235_OUT",
            FitModel::Cost235In => "COST235_IN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// `ple` for CI; `alpha`, `beta` for FI; `a`, `b`, `c` for COST 235.
    pub params: BTreeMap<String, f64>,
    /// Standard deviation of the residuals, dB.
    pub sigma_db: f64,
    pub rmse_db: f64,
    pub n: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    fn new(model: FitModel, params: &[(&str, f64)], residuals: &[f64]) -> Self {
        let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
        Self {
            model,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            sigma_db: std_pop(residuals),
            rmse_db: rmse,
            n: residuals.len(),
        }
    }
}

/// Chamber-referenced amplitude: the absolute channel gain divided by the
/// free-space gain of the calibration distance at the carrier.
pub fn calibration_referenced(amplitude: Complex64, d_ane: f64, carrier_hz: f64) -> Complex64 {
    amplitude / free_space_gain(d_ane, carrier_hz)
}

/// Omnidirectional path loss `-10 log10(sum |alpha|^2) + FSPL(d_ane)` for
/// chamber-referenced amplitudes.
pub fn omni_path_loss(mpcs: &[Mpc], d_ane: f64, carrier_hz: f64) -> Result<f64> {
    ensure(!mpcs.is_empty(), || Error::NoPaths)?;
    let total: f64 = mpcs.iter().map(Mpc::power).sum();
    ensure(total > 0.0, || Error::NoPaths)?;
    Ok(-10.0 * total.log10() + fspl_db(d_ane, carrier_hz)?)
}

fn check_distances(samples: &[PathLossSample]) -> Result<()> {
    ensure(samples.len() >= 2, || Error::InsufficientData {
        needed: 2,
        got: samples.len(),
    })?;
    let d0 = samples[0].distance_m;
    ensure(samples.iter().any(|s| s.distance_m != d0), || {
        Error::RankDeficient("all distances identical".into())
    })
}

/// Close-in model `PL = FSPL(d0) + 10 n log10(d / d0)`.
pub fn fit_ci(samples: &[PathLossSample], carrier_hz: f64, d0: f64) -> Result<FitResult> {
    check_distances(samples)?;
    let fspl0 = fspl_db(d0, carrier_hz)?;
    let x: Vec<f64> = samples.iter().map(|s| 10.0 * (s.distance_m / d0).log10()).collect();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    ensure(sxx > 0.0, || Error::RankDeficient("all samples at the reference distance".into()))?;
    let sxy: f64 = x.iter().zip(samples).map(|(xi, s)| xi * (s.pl_db - fspl0)).sum();
    let ple = sxy / sxx;
    let resid: Vec<f64> = x.iter().zip(samples).map(|(xi, s)| s.pl_db - fspl0 - ple * xi).collect();
    Ok(FitResult::new(FitModel::Ci, &[("ple", ple)], &resid))
}

/// Floating-intercept model `PL = alpha + 10 beta log10(d / d0)`.
pub fn fit_fi(samples: &[PathLossSample], d0: f64) -> Result<FitResult> {
    check_distances(samples)?;
    let x: Vec<f64> = samples.iter().map(|s| 10.0 * (s.distance_m / d0).log10()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.pl_db).collect();
    let mx = mean(&x);
    let my = mean(&y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    ensure(sxx > 0.0, || Error::RankDeficient("all distances identical".into()))?;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - alpha - beta * a).collect();
    Ok(FitResult::new(FitModel::Fi, &[("alpha", alpha), ("beta", beta)], &resid))
}

/// Fit `L = A f^B d^C` by linear regression of `ln L` on `ln f` and `ln d`.
///
/// With a single frequency `B` is not identifiable; pass `b_fixed`
/// (for instance `leaf.original().b`) so `A` absorbs the frequency term.
pub fn fit_cost235(samples: &[FoliageSample], leaf: LeafState, b_fixed: Option<f64>) -> Result<FitResult> {
    ensure(samples.len() >= 2, || Error::InsufficientData {
        needed: 2,
        got: samples.len(),
    })?;
    for s in samples {
        ensure(s.depth_m > 0.0 && s.freq_mhz > 0.0 && s.excess_db > 0.0, || {
            Error::Domain(format!(
                "log-domain fit needs positive depth, frequency and loss, got {s:?}"
            ))
        })?;
    }
    let d0 = samples[0].depth_m;
    ensure(samples.iter().any(|s| s.depth_m != d0), || {
        Error::RankDeficient("at least two distinct foliage depths required".into())
    })?;
    let f0 = samples[0].freq_mhz;
    let multi_freq = samples.iter().any(|s| s.freq_mhz != f0);
    let model = match leaf {
        LeafState::OutOfLeaf => FitModel::Cost235Out,
        LeafState::InLeaf => FitModel::Cost235In,
    };
    let n = samples.len();
    let ln_d = DVector::from_iterator(n, samples.iter().map(|s| s.depth_m.ln()));
    let ln_l = DVector::from_iterator(n, samples.iter().map(|s| s.excess_db.ln()));
    let ln_f = DVector::from_iterator(n, samples.iter().map(|s| s.freq_mhz.ln()));
    let (a, b, c) = match b_fixed {
        Some(b) => {
            let y = &ln_l - &ln_f * b;
            let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { ln_d[i] });
            let sol = lstsq(&design, &y)?;
            (sol[0].exp(), b, sol[1])
        }
        None => {
            ensure(multi_freq, || {
                Error::Identifiability(
                    "frequency exponent B cannot be fitted from a single frequency; fix B".into(),
                )
            })?;
            let design = DMatrix::from_fn(n, 3, |i, j| match j {
                0 => 1.0,
                1 => ln_f[i],
                _ => ln_d[i],
            });
            let sol = lstsq(&design, &ln_l)?;
            (sol[0].exp(), sol[1], sol[2])
        }
    };
    let resid: Vec<f64> = samples
        .iter()
        .map(|s| s.excess_db - a * s.freq_mhz.powf(b) * s.depth_m.powf(c))
        .collect();
    Ok(FitResult::new(model, &[("a", a), ("b", b), ("c", c)], &resid))
}

/// Power-weighted RMS delay spread of `delays` (seconds).
pub fn rms_delay_spread(delays: &[f64], powers: &[f64]) -> Result<f64> {
    ensure(delays.len() == powers.len(), || Error::Dimension("delays and powers differ in length".into()))?;
    ensure(!delays.is_empty(), || Error::NoPaths)?;
    let total: f64 = powers.iter().sum();
    ensure(total > 0.0, || Error::InvalidArgument("total power must be positive".into()))?;
    let m1: f64 = delays.iter().zip(powers).map(|(t, p)| t * p).sum::<f64>() / total;
    let m2: f64 = delays.iter().zip(powers).map(|(t, p)| (t - m1) * (t - m1) * p).sum::<f64>() / total;
    Ok(m2.max(0.0).sqrt())
}

pub fn rms_ds(mpcs: &[Mpc]) -> Result<f64> {
    ensure(!mpcs.is_empty(), || Error::NoPaths)?;
    let d: Vec<f64> = mpcs.iter().map(|m| m.delay).collect();
    let p: Vec<f64> = mpcs.iter().map(Mpc::power).collect();
    rms_delay_spread(&d, &p)
}

/// Resultant magnitude below which the angular spread saturates.
pub const AS_RESULTANT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularSpread {
    pub rad: f64,
    pub deg: f64,
    /// The resultant vanished and `rad` holds the saturation value.
    pub saturated: bool,
}

/// Circular angular spread `sqrt(-2 ln |sum P e^{j phi} / sum P|)`.
pub fn angular_spread(angles_rad: &[f64], powers: &[f64]) -> Result<AngularSpread> {
    ensure(angles_rad.len() == powers.len(), || {
        Error::Dimension("angles and powers differ in length".into())
    })?;
    let total: f64 = powers.iter().sum();
    ensure(total > 0.0, || Error::InvalidArgument("total power must be positive".into()))?;
    let resultant: Complex64 = angles_rad
        .iter()
        .zip(powers)
        .map(|(a, p)| Complex64::from_polar(*p, *a))
        .sum::<Complex64>()
        / total;
    let r = resultant.norm();
    let (r, saturated) = if r < AS_RESULTANT_FLOOR {
        (AS_RESULTANT_FLOOR, true)
    } else {
        (r.min(1.0), false)
    };
    let rad = (-2.0 * r.ln()).max(0.0).sqrt();
    Ok(AngularSpread {
        rad,
        deg: rad.to_degrees(),
        saturated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub log10_mu: f64,
    pub log10_sigma: f64,
}

/// Mean and population standard deviation of `log10(values)`.
pub fn lognormal_fit(values: &[f64]) -> Result<LogNormalFit> {
    ensure(!values.is_empty(), || Error::InsufficientData { needed: 1, got: 0 })?;
    ensure(values.iter().all(|v| *v > 0.0 && v.is_finite()), || {
        Error::Domain("log-normal fit requires positive values".into())
    })?;
    let l: Vec<f64> = values.iter().map(|v| v.log10()).collect();
    Ok(LogNormalFit {
        log10_mu: mean(&l),
        log10_sigma: std_pop(&l),
    })
}

/// Dispersion of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadStats {
    pub rms_ds_s: f64,
    pub asa_deg: f64,
    pub asd_deg: f64,
    pub esd_deg: f64,
    /// Any angular spread hit the saturation value.
    pub saturated: bool,
}

pub fn spread_stats(mpcs: &[Mpc]) -> Result<SpreadStats> {
    let p: Vec<f64> = mpcs.iter().map(Mpc::power).collect();
    let asa = angular_spread(&mpcs.iter().map(|m| m.aaoa).collect::<Vec<_>>(), &p)?;
    let asd = angular_spread(&mpcs.iter().map(|m| m.aaod).collect::<Vec<_>>(), &p)?;
    let esd = angular_spread(&mpcs.iter().map(|m| m.eaod).collect::<Vec<_>>(), &p)?;
    Ok(SpreadStats {
        rms_ds_s: rms_ds(mpcs)?,
        asa_deg: asa.deg,
        asd_deg: asd.deg,
        esd_deg: esd.deg,
        saturated: asa.saturated || asd.saturated || esd.saturated,
    })
}

/// Log-normal parameters of each dispersion quantity over a set of links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadSummary {
    pub ds: LogNormalFit,
    pub asa: LogNormalFit,
    pub asd: LogNormalFit,
    pub esd: LogNormalFit,
}

/// Summaries of per-link spreads. Zero spreads (single-path links) are
/// excluded from the logarithmic fits.
pub fn summarize_spreads(links: &[SpreadStats]) -> Result<SpreadSummary> {
    let fit = |f: &dyn Fn(&SpreadStats) -> f64| {
        let v: Vec<f64> = links.iter().map(f).filter(|v| *v > 0.0).collect();
        lognormal_fit(&v)
    };
    Ok(SpreadSummary {
        ds: fit(&|s| s.rms_ds_s)?,
        asa: fit(&|s| s.asa_deg)?,
        asd: fit(&|s| s.asd_deg)?,
        esd: fit(&|s| s.esd_deg)?,
    })
}

/// Power over a (delay, azimuth-of-arrival) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdapGrid {
    pub delay_bin_s: f64,
    pub angle_bin_rad: f64,
    /// `[delay][angle]`, linear power.
    pub power: Vec<Vec<f64>>,
    pub floor_db: f64,
}

impl PdapGrid {
    pub fn total_power(&self) -> f64 {
        self.power.iter().flatten().sum()
    }

    /// Power in dB, empty cells clamped to `floor_db`.
    pub fn power_db(&self) -> Vec<Vec<f64>> {
        self.power
            .iter()
            .map(|row| row.iter().map(|p| (10.0 * p.log10()).max(self.floor_db)).collect())
            .collect()
    }
}

/// Accumulate MPC powers into `delay_bins` uniform bins over
/// `[0, max_delay_s)` and `angle_bins` over `[-pi, pi)`. Delays beyond the
/// range land in the last bin so no power is dropped.
pub fn pdap_grid(mpcs: &[Mpc], delay_bins: usize, angle_bins: usize, max_delay_s: f64, floor_db: f64) -> Result<PdapGrid> {
    ensure(delay_bins > 0 && angle_bins > 0, || {
        Error::InvalidArgument("bin counts must be positive".into())
    })?;
    ensure(max_delay_s > 0.0, || Error::InvalidArgument("max delay must be positive".into()))?;
    let db = max_delay_s / delay_bins as f64;
    let ab = 2.0 * PI / angle_bins as f64;
    let mut power = vec![vec![0.0; angle_bins]; delay_bins];
    for m in mpcs {
        let i = ((m.delay / db) as usize).min(delay_bins - 1);
        let j = (((m.aaoa + PI) / ab) as usize).min(angle_bins - 1);
        power[i][j] += m.power();
    }
    Ok(PdapGrid {
        delay_bin_s: db,
        angle_bin_rad: ab,
        power,
        floor_db,
    })
}

/// A published path-loss parameter set for side-by-side reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferencePathLoss {
    pub scenario: &'static str,
    pub model: FitModel,
    /// CI: `[ple]`; FI: `[alpha, beta]`; COST 235: `[a, b, c]`.
    pub params: &'static [f64],
    pub sigma_db: f64,
}

pub const REFERENCE_PATH_LOSS: &[ReferencePathLoss] = &[
    ReferencePathLoss { scenario: "NF_LOS", model: FitModel::Ci, params: &[1.98], sigma_db: 1.69 },
    ReferencePathLoss { scenario: "NF_LOS", model: FitModel::Fi, params: &[58.35, 1.81], sigma_db: 1.69 },
    ReferencePathLoss { scenario: "FF_LOS", model: FitModel::Ci, params: &[1.89], sigma_db: 2.23 },
    ReferencePathLoss { scenario: "FF_LOS", model: FitModel::Fi, params: &[62.5, 1.58], sigma_db: 2.19 },
    ReferencePathLoss { scenario: "NF_FOLIAGE", model: FitModel::Cost235Out, params: &[25.457, -0.286, 1.246], sigma_db: 2.12 },
    ReferencePathLoss { scenario: "NF_FOLIAGE", model: FitModel::Cost235In, params: &[16.385, -0.241, 1.247], sigma_db: 2.12 },
    ReferencePathLoss { scenario: "FF_FOLIAGE", model: FitModel::Cost235Out, params: &[32.259, -0.088, 0.055], sigma_db: 0.95 },
    ReferencePathLoss { scenario: "FF_FOLIAGE", model: FitModel::Cost235In, params: &[17.387, -0.022, 0.047], sigma_db: 0.95 },
];

/// Residual spread of the original COST 235 constants against the
/// foliage measurements, dB.
pub const REFERENCE_COST235_ORIGINAL_SIGMA: &[(&str, FitModel, f64)] = &[
    ("NF_FOLIAGE", FitModel::Cost235Out, 4.95),
    ("NF_FOLIAGE", FitModel::Cost235In, 4.39),
    ("FF_FOLIAGE", FitModel::Cost235Out, 1.22),
    ("FF_FOLIAGE", FitModel::Cost235In, 1.28),
];

/// Published `(mu, sigma)` of log10 DS [s], ASA, ASD and ESD [deg].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceSpreads {
    pub scenario: &'static str,
    pub ds: (f64, f64),
    pub asa: (f64, f64),
    pub asd: (f64, f64),
    pub esd: (f64, f64),
}

pub const REFERENCE_SPREADS: &[ReferenceSpreads] = &[
    ReferenceSpreads { scenario: "NF_LOS", ds: (-8.50, 0.32), asa: (0.87, 0.24), asd: (0.69, 0.31), esd: (0.53, 0.32) },
    ReferenceSpreads { scenario: "FF_LOS", ds: (-8.89, 1.75), asa: (0.06, 2.10), asd: (0.31, 2.16), esd: (-0.99, 2.70) },
    ReferenceSpreads { scenario: "NF_FOLIAGE", ds: (-8.41, 0.36), asa: (0.83, 0.63), asd: (0.87, 0.65), esd: (0.68, 0.27) },
    ReferenceSpreads { scenario: "FF_FOLIAGE", ds: (-7.48, 0.23), asa: (1.69, 0.07), asd: (0.72, 2.56), esd: (1.23, 0.24) },
    ReferenceSpreads { scenario: "3GPP_UMI_LOS", ds: (-7.43, 0.38), asa: (1.63, 0.30), asd: (1.15, 0.41), esd: (0.54, 0.35) },
];

pub fn reference_spreads(scenario: &str) -> Option<&'static ReferenceSpreads> {
    REFERENCE_SPREADS.iter().find(|r| r.scenario == scenario)
}

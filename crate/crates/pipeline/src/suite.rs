//! Scenario batch runner: synthesize or load each link, estimate its
//! multipath, and aggregate per-class statistics into reports.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use umimo_core::capacity::{
    capacity, capacity_with, fit_gmm2, fit_normal, select_by_bic, DistFit, DistKind, EmpiricalCdf, Normalization,
};
use umimo_core::newchar::{chd, cscf, CscfPairing, HardeningEnsemble, PointGains};
use umimo_core::propagation::{foliage_excess_loss_db, fspl_db};
use umimo_core::sage::{sage_estimate, SageConfig};
use umimo_core::sounding::{
    chamber_cir, gen_pn, ota_calibrate, sound_link, Cir, FrontEndResponse, PnSequence, SounderResponse,
};
use umimo_core::stats::{
    calibration_referenced, fit_ci, fit_cost235, fit_fi, omni_path_loss, spread_stats, summarize_spreads,
    FitResult, FoliageSample, PathLossSample, SpreadStats,
};
use umimo_core::synth::{iid_rayleigh, synth_channel, ScatterModel};
use umimo_core::{ArrayGeometry, ChannelTensor, Mpc, ScenarioClass, ScenarioConfig, Wavefront};

use crate::config::{RunConfig, SuiteConfig};
use crate::error::Result;
use crate::manifest::{resolve, DatasetManifest, LinkEntry};
use crate::records::{parse_geometry, MpcList, MpcRecord};
use crate::tensor_io::load_tensor;

/// Capacity CDF rows kept per scenario.
const CDF_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub link_id: String,
    pub scenario_class: ScenarioClass,
    pub distance_m: f64,
    pub foliage_depth_m: f64,
    pub carrier_hz: f64,
    pub seed: u64,
}

/// Per-link results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub pl_db: f64,
    /// Path loss imposed by the generator, synthetic links only.
    pub generator_pl_db: Option<f64>,
    pub n_paths: usize,
    pub residual_power_db: Option<f64>,
    pub spreads: SpreadStats,
    pub cscf: Option<f64>,
    pub capacity_mean: f64,
    pub mpcs: Vec<MpcRecord>,
    #[serde(skip)]
    capacity: Vec<f64>,
    #[serde(skip)]
    point: Option<(PointGains, (usize, usize, usize))>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub spec: LinkSpec,
    pub metrics: Option<LinkMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub scenario: String,
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub sigma_db: f64,
    pub rmse_db: f64,
    pub n: usize,
}

impl FitRow {
    fn new(scenario: ScenarioClass, fit: FitResult) -> Self {
        Self {
            scenario: scenario.label().into(),
            model: fit.model.label().into(),
            params: fit.params,
            sigma_db: fit.sigma_db,
            rmse_db: fit.rmse_db,
            n: fit.n,
        }
    }
}

/// Log-normal summaries: `log10` of DS in seconds, of AS in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadRow {
    pub scenario: String,
    pub n: usize,
    pub ds_mu: f64,
    pub ds_sigma: f64,
    pub asa_mu: f64,
    pub asa_sigma: f64,
    pub asd_mu: f64,
    pub asd_sigma: f64,
    pub esd_mu: f64,
    pub esd_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChdRow {
    pub scenario: String,
    pub n_rx: usize,
    pub chd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub scenario: String,
    pub snr_db: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub selected: DistKind,
    pub normal: DistFit,
    pub gmm2: Option<DistFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub scenario: String,
    pub capacity: f64,
    pub cdf: f64,
}

/// Recovered quantity compared with the value the generator imposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// Link id, or `<scenario>/<stage>` for aggregation failures.
    pub item: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tool_version: String,
    pub seed: u64,
    pub source: String,
    pub config: RunConfig,
    pub links: Vec<LinkOutcome>,
    pub path_loss: Vec<FitRow>,
    pub spreads: Vec<SpreadRow>,
    pub chd: Vec<ChdRow>,
    pub capacity: Vec<CapacityRow>,
    pub capacity_cdf: Vec<CdfRow>,
    pub checks: Vec<CheckRow>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

impl SuiteReport {
    /// 0 when every link and aggregate succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Stateless 64-bit mixer used to derive independent per-link seeds.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic link layout: distances log-uniform over the class's range,
/// foliage depths uniform.
pub fn plan_links(cfg: &RunConfig) -> Vec<LinkSpec> {
    let s = &cfg.suite;
    let mut out = Vec::new();
    for class in &s.classes {
        let ci = ScenarioClass::ALL.iter().position(|c| c == class).unwrap_or(0) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, ci, u64::MAX));
        let range = if class.is_near_field() {
            s.near_field_distance_m
        } else {
            s.far_field_distance_m
        };
        for i in 0..s.links_per_class {
            let u: f64 = rng.gen();
            let distance_m = 10f64.powf(range[0].log10() + u * (range[1].log10() - range[0].log10()));
            let v: f64 = rng.gen();
            let foliage_depth_m = if class.is_foliage() {
                (s.foliage_depth_m[0] + v * (s.foliage_depth_m[1] - s.foliage_depth_m[0])).min(distance_m)
            } else {
                0.0
            };
            out.push(LinkSpec {
                link_id: format!("{}-{i:03}", class.label()),
                scenario_class: *class,
                distance_m,
                foliage_depth_m,
                carrier_hz: s.carrier_hz,
                seed: derive_seed(cfg.seed, ci, i as u64),
            });
        }
    }
    out
}

fn sounder(s: &SuiteConfig) -> SounderResponse {
    SounderResponse {
        g_sys: if s.ripple_peak_to_peak_db > 0.0 {
            FrontEndResponse::Ripple {
                peak_to_peak_db: s.ripple_peak_to_peak_db,
                period_hz: s.ripple_period_hz,
                phase_rad: 0.3,
                group_delay_s: 2e-9,
            }
        } else {
            FrontEndResponse::Flat
        },
        ..SounderResponse::default()
    }
}

/// Generator path loss: close-in law plus foliage excess and shadowing.
fn generator_path_loss(spec: &LinkSpec, s: &SuiteConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let excess = if spec.scenario_class.is_foliage() && spec.foliage_depth_m > 0.0 {
        foliage_excess_loss_db(spec.foliage_depth_m, spec.carrier_hz / 1e6, s.leaf_state.original())?
    } else {
        0.0
    };
    let shadow: f64 = rng.sample(StandardNormal);
    Ok(fspl_db(1.0, spec.carrier_hz)? + 10.0 * s.generator_ple * spec.distance_m.log10()
        + excess
        + s.shadow_sigma_db * shadow)
}

/// Synthesize, sound and calibrate one link. Returns the calibrated
/// tensor, the placed geometry and the generator path loss.
pub fn measure_synthetic_link(
    spec: &LinkSpec,
    s: &SuiteConfig,
    pn: &PnSequence,
) -> Result<(ChannelTensor, ScenarioConfig, f64)> {
    let mut sc = ScenarioConfig::link(
        spec.scenario_class,
        parse_geometry(&s.tx_array)?,
        parse_geometry(&s.rx_array)?,
        spec.distance_m,
        s.tx_height_m,
        s.rx_height_m,
    )?;
    sc.carrier_hz = spec.carrier_hz;
    sc.bandwidth_hz = s.bandwidth_hz;
    sc.foliage_depth_m = spec.foliage_depth_m;
    sc.seed = spec.seed;
    sc.num_freq = pn.len();
    sc.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut model = ScatterModel::for_class(spec.scenario_class);
    model.foliage = s.leaf_state.original();
    let mut mpcs = model.generate(&sc, &mut rng)?;
    let target_pl = generator_path_loss(spec, s, &mut rng)?;
    let total: f64 = mpcs.iter().map(Mpc::power).sum();
    let k = (10f64.powf(-target_pl / 10.0) / total).sqrt();
    for m in &mut mpcs {
        m.amplitude *= k;
    }
    let wavefront = if spec.scenario_class.is_near_field() {
        Wavefront::Spherical
    } else {
        Wavefront::Planar
    };
    let h = synth_channel(&sc, &mpcs, wavefront)?;

    let cir = Cir::from_tensor(&h, 0)?;
    let response = sounder(s);
    let clean = sound_link(&cir, pn, &response, f64::NEG_INFINITY, s.oversample, spec.seed)?;
    let noise_dbm = 10.0 * clean.mean_power().log10() - s.sounding_snr_db;
    let y = sound_link(&cir, pn, &response, noise_dbm, s.oversample, spec.seed.wrapping_add(1))?;
    let cal = chamber_cir(s.chamber_distance_m, sc.carrier_hz, sc.bandwidth_hz, pn.len())?;
    let y_cal = sound_link(&cal, pn, &response, noise_dbm, s.oversample, spec.seed.wrapping_add(2))?;
    let est = ota_calibrate(&y, &y_cal, s.chamber_distance_m, sc.carrier_hz)?.to_tensor()?;
    Ok((est, sc, target_pl))
}

/// Estimation and per-link statistics on a calibrated tensor. When `known`
/// MPCs are supplied they replace the estimator output.
pub fn analyse_link(
    tensor: &ChannelTensor,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    s: &SuiteConfig,
    carrier_hz: f64,
    known: Option<Vec<Mpc>>,
) -> Result<LinkMetrics> {
    let (_, n_f, n_rx, n_tx) = tensor.dims();
    let (mpcs, residual) = match known {
        Some(m) => (m, None),
        None => {
            let cfg = SageConfig {
                window_rx: s.sage_window_rx.min(n_rx),
                window_tx: s.sage_window_tx.min(n_tx),
                max_paths: s.sage_max_paths,
                dynamic_range_db: s.sage_dynamic_range_db,
                ..SageConfig::default()
            };
            let r = sage_estimate(tensor, tx, rx, &cfg)?;
            (r.mpcs, Some(r.residual_power_db))
        }
    };
    if mpcs.is_empty() {
        return Err(umimo_core::Error::NoPaths.into());
    }
    let referenced: Vec<Mpc> = mpcs
        .iter()
        .map(|m| m.with_amplitude(calibration_referenced(m.amplitude, s.chamber_distance_m, carrier_hz)))
        .collect();
    let pl_db = omni_path_loss(&referenced, s.chamber_distance_m, carrier_hz)?;
    let cap = capacity(tensor, s.capacity_snr_db)?;
    Ok(LinkMetrics {
        pl_db,
        generator_pl_db: None,
        n_paths: mpcs.len(),
        residual_power_db: residual,
        spreads: spread_stats(&mpcs)?,
        cscf: if n_rx >= 2 {
            Some(cscf(tensor, CscfPairing::AllRxPairs)?)
        } else {
            None
        },
        capacity_mean: cap.mean(),
        mpcs: mpcs.iter().map(MpcRecord::from).collect(),
        capacity: cap.values,
        point: Some((PointGains::from_tensor(tensor)?, (n_f, n_rx, n_tx))),
    })
}

fn run_synthetic(spec: &LinkSpec, s: &SuiteConfig, pn: &PnSequence) -> Result<LinkMetrics> {
    let (est, sc, target) = measure_synthetic_link(spec, s, pn)?;
    let mut m = analyse_link(&est, &sc.tx_geometry, &sc.rx_geometry, s, spec.carrier_hz, None)?;
    m.generator_pl_db = Some(target);
    Ok(m)
}

fn outcome(spec: LinkSpec, r: Result<LinkMetrics>) -> LinkOutcome {
    match r {
        Ok(m) => LinkOutcome {
            spec,
            metrics: Some(m),
            error: None,
        },
        Err(e) => {
            log::warn!("link {} failed: {e}", spec.link_id);
            LinkOutcome {
                spec,
                metrics: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Run the synthetic campaign described by `cfg`.
pub fn run_scenario_suite(cfg: &RunConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let s = &cfg.suite;
    let pn = gen_pn(s.pn_register_width, s.pn_polynomial, 1)?;
    let specs = plan_links(cfg);
    let mut links: Vec<LinkOutcome> = specs
        .into_par_iter()
        .map(|spec| {
            let r = run_synthetic(&spec, s, &pn);
            outcome(spec, r)
        })
        .collect();
    links.sort_by(|a, b| a.spec.link_id.cmp(&b.spec.link_id));
    let mut report = assemble(cfg, "synthetic", links);
    if cfg.iid.enabled {
        iid_capacity(cfg, &mut report);
    }
    Ok(report)
}

fn run_manifest_link(entry: &LinkEntry, base: &Path, s: &SuiteConfig) -> Result<LinkMetrics> {
    let tensor = load_tensor(&resolve(base, &entry.tensor_blob_ref), entry.carrier_hz, entry.bandwidth_hz)?;
    let tx = parse_geometry(&entry.tx_geometry)?;
    let rx = parse_geometry(&entry.rx_geometry)?;
    let known = match &entry.mpc_list_ref {
        Some(p) => Some(MpcList::load(&resolve(base, p))?.to_mpcs()?),
        None => None,
    };
    analyse_link(&tensor, &tx, &rx, s, entry.carrier_hz, known)
}

/// Analyse the links of a dataset manifest. Tensors are taken as
/// calibrated absolute channel responses.
pub fn run_manifest_suite(cfg: &RunConfig, manifest: &DatasetManifest, base: &Path) -> Result<SuiteReport> {
    cfg.validate()?;
    manifest.validate(base)?;
    let s = &cfg.suite;
    let mut links: Vec<LinkOutcome> = manifest
        .links
        .par_iter()
        .map(|e| {
            let spec = LinkSpec {
                link_id: e.link_id.clone(),
                scenario_class: e.scenario_class,
                distance_m: e.distance_m,
                foliage_depth_m: e.foliage_depth_m,
                carrier_hz: e.carrier_hz,
                seed: cfg.seed,
            };
            outcome(spec, run_manifest_link(e, base, s))
        })
        .collect();
    links.sort_by(|a, b| a.spec.link_id.cmp(&b.spec.link_id));
    let mut report = assemble(cfg, "manifest", links);
    if manifest.links.is_empty() {
        report.warnings.push("manifest contains no links; report is empty".into());
    }
    if cfg.iid.enabled {
        iid_capacity(cfg, &mut report);
    }
    Ok(report)
}

fn subset_sizes(n_rx: usize) -> Vec<usize> {
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2))
        .take_while(|n| *n <= n_rx)
        .collect();
    if v.last() != Some(&n_rx) {
        v.push(n_rx);
    }
    v
}

fn capacity_rows(
    label: &str,
    values: &[f64],
    snr_db: f64,
    max_iter: usize,
    seed: u64,
) -> std::result::Result<(CapacityRow, Vec<CdfRow>), String> {
    let normal = fit_normal(values).map_err(|e| e.to_string())?;
    let gmm2 = fit_gmm2(values, max_iter, 1e-8, seed).ok();
    let selected = match &gmm2 {
        Some(g) => select_by_bic(&normal, g).kind,
        None => DistKind::Normal,
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let points = EmpiricalCdf::new(values).map_err(|e| e.to_string())?.points();
    let step = points.len().div_ceil(CDF_POINTS).max(1);
    let mut cdf: Vec<CdfRow> = points
        .iter()
        .step_by(step)
        .map(|(c, f)| CdfRow {
            scenario: label.into(),
            capacity: *c,
            cdf: *f,
        })
        .collect();
    if let Some((c, f)) = points.last() {
        if cdf.last().map(|r| r.cdf) != Some(*f) {
            cdf.push(CdfRow {
                scenario: label.into(),
                capacity: *c,
                cdf: *f,
            });
        }
    }
    Ok((
        CapacityRow {
            scenario: label.into(),
            snr_db,
            n: values.len(),
            mean,
            std,
            selected,
            normal,
            gmm2,
        },
        cdf,
    ))
}

fn assemble(cfg: &RunConfig, source: &str, links: Vec<LinkOutcome>) -> SuiteReport {
    let s = &cfg.suite;
    let mut report = SuiteReport {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        source: source.into(),
        config: cfg.clone(),
        links: Vec::new(),
        path_loss: Vec::new(),
        spreads: Vec::new(),
        chd: Vec::new(),
        capacity: Vec::new(),
        capacity_cdf: Vec::new(),
        checks: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    for l in &links {
        if let Some(e) = &l.error {
            report.failures.push(Failure {
                item: l.spec.link_id.clone(),
                error: e.clone(),
            });
        }
    }
    let fail = |report: &mut SuiteReport, class: ScenarioClass, stage: &str, e: String| {
        report.failures.push(Failure {
            item: format!("{}/{stage}", class.label()),
            error: e,
        })
    };

    for class in ScenarioClass::ALL {
        let ok: Vec<(&LinkSpec, &LinkMetrics)> = links
            .iter()
            .filter(|l| l.spec.scenario_class == class)
            .filter_map(|l| l.metrics.as_ref().map(|m| (&l.spec, m)))
            .collect();
        if ok.is_empty() {
            continue;
        }
        let fc = ok[0].0.carrier_hz;
        if ok.iter().any(|(sp, _)| sp.carrier_hz != fc) {
            report.warnings.push(format!(
                "{}: links use different carriers; close-in fit referenced to {fc} Hz",
                class.label()
            ));
        }

        let samples: std::result::Result<Vec<PathLossSample>, _> = ok
            .iter()
            .map(|(sp, m)| PathLossSample::new(sp.distance_m, m.pl_db, class, sp.foliage_depth_m))
            .collect();
        match samples {
            Ok(samples) => {
                match fit_ci(&samples, fc, 1.0) {
                    Ok(f) => {
                        if source == "synthetic" && !class.is_foliage() {
                            let ple = f.param("ple").unwrap_or(f64::NAN);
                            report.checks.push(check(
                                format!("{} CI PLE", class.label()),
                                s.generator_ple,
                                ple,
                                cfg.tolerances.ple,
                            ));
                            report.checks.push(check(
                                format!("{} CI sigma_db", class.label()),
                                s.shadow_sigma_db,
                                f.sigma_db,
                                cfg.tolerances.sigma_db,
                            ));
                        }
                        report.path_loss.push(FitRow::new(class, f));
                    }
                    Err(e) => fail(&mut report, class, "CI", e.to_string()),
                }
                match fit_fi(&samples, 1.0) {
                    Ok(f) => report.path_loss.push(FitRow::new(class, f)),
                    Err(e) => fail(&mut report, class, "FI", e.to_string()),
                }
                if class.is_foliage() {
                    let fol: Vec<FoliageSample> = ok
                        .iter()
                        .filter_map(|(sp, m)| {
                            let excess = m.pl_db - fspl_db(sp.distance_m, sp.carrier_hz).ok()?;
                            (excess > 0.0 && sp.foliage_depth_m > 0.0).then_some(FoliageSample {
                                depth_m: sp.foliage_depth_m,
                                freq_mhz: sp.carrier_hz / 1e6,
                                excess_db: excess,
                            })
                        })
                        .collect();
                    let leaf = s.leaf_state;
                    match fit_cost235(&fol, leaf, Some(leaf.original().b)) {
                        Ok(f) => report.path_loss.push(FitRow::new(class, f)),
                        Err(e) => fail(&mut report, class, "COST235", e.to_string()),
                    }
                }
            }
            Err(e) => fail(&mut report, class, "path_loss", e.to_string()),
        }

        let stats: Vec<SpreadStats> = ok.iter().map(|(_, m)| m.spreads).collect();
        match summarize_spreads(&stats) {
            Ok(sum) => report.spreads.push(SpreadRow {
                scenario: class.label().into(),
                n: stats.len(),
                ds_mu: sum.ds.log10_mu,
                ds_sigma: sum.ds.log10_sigma,
                asa_mu: sum.asa.log10_mu,
                asa_sigma: sum.asa.log10_sigma,
                asd_mu: sum.asd.log10_mu,
                asd_sigma: sum.asd.log10_sigma,
                esd_mu: sum.esd.log10_mu,
                esd_sigma: sum.esd.log10_sigma,
            }),
            Err(e) => fail(&mut report, class, "spreads", e.to_string()),
        }

        let points: Vec<&(PointGains, (usize, usize, usize))> = ok.iter().filter_map(|(_, m)| m.point.as_ref()).collect();
        if let Some((_, dims)) = points.first() {
            if points.iter().any(|(_, d)| d != dims) {
                fail(&mut report, class, "CHD", "links have different tensor dimensions".into());
            } else {
                let ens = HardeningEnsemble {
                    points: points.iter().map(|(p, _)| p.clone()).collect(),
                    rx_subset_sizes: subset_sizes(dims.1),
                    dims: Some(*dims),
                };
                for &n in &ens.rx_subset_sizes {
                    match chd(&ens, n) {
                        Ok(v) => report.chd.push(ChdRow {
                            scenario: class.label().into(),
                            n_rx: n,
                            chd: v,
                        }),
                        Err(e) => {
                            fail(&mut report, class, "CHD", e.to_string());
                            break;
                        }
                    }
                }
            }
        }

        let values: Vec<f64> = ok.iter().flat_map(|(_, m)| m.capacity.iter().copied()).collect();
        let seed = derive_seed(cfg.seed, 7, class as u64);
        match capacity_rows(class.label(), &values, s.capacity_snr_db, s.gmm_max_iter, seed) {
            Ok((row, cdf)) => {
                report.capacity.push(row);
                report.capacity_cdf.extend(cdf);
            }
            Err(e) => fail(&mut report, class, "capacity", e),
        }
    }
    report.links = links;
    report
}

fn check(name: String, expected: f64, observed: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        name,
        expected,
        observed,
        tolerance,
        pass: (observed - expected).abs() <= tolerance,
    }
}

/// i.i.d. Rayleigh capacity with ensemble power normalization.
fn iid_capacity(cfg: &RunConfig, report: &mut SuiteReport) {
    let c = &cfg.iid;
    let result = iid_rayleigh(c.n_rx, c.n_tx, c.draws, 1, derive_seed(cfg.seed, 11, 0))
        .and_then(|h| capacity_with(&h, c.snr_db, Normalization::Ensemble));
    match result {
        Ok(samples) => match capacity_rows("IID_RAYLEIGH", &samples.values, c.snr_db, cfg.suite.gmm_max_iter, cfg.seed) {
            Ok((row, cdf)) => {
                if (c.n_rx, c.n_tx, c.snr_db) == (64, 128, 10.0) {
                    report.checks.push(check(
                        "IID_RAYLEIGH capacity mean".into(),
                        200.0,
                        row.mean,
                        cfg.tolerances.iid_capacity_mean,
                    ));
                }
                report.capacity.push(row);
                report.capacity_cdf.extend(cdf);
            }
            Err(e) => report.failures.push(Failure {
                item: "IID_RAYLEIGH/capacity".into(),
                error: e,
            }),
        },
        Err(e) => report.failures.push(Failure {
            item: "IID_RAYLEIGH/capacity".into(),
            error: e.to_string(),
        }),
    }
}

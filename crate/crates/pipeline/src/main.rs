use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use umimo_core::capacity::{capacity_with, fit_gmm2, fit_normal, select_by_bic, EmpiricalCdf, Normalization};
use umimo_core::newchar::{chd_curve, cscf, fit_aperture_trends, AperturePathTrace, CscfPairing, HardeningEnsemble};
use umimo_core::propagation::LeafState;
use umimo_core::sage::{sage_estimate, SageConfig};
use umimo_core::sounding::{chamber_cir, gen_pn, ota_calibrate, sound_link, Cir, FrontEndResponse, SounderResponse};
use umimo_core::stats::{
    fit_ci, fit_cost235, fit_fi, pdap_grid, spread_stats, FitResult, FoliageSample, PathLossSample,
};
use umimo_core::synth::{iid_rayleigh, synth_channel, ScatterModel};
use umimo_core::{ScenarioClass, ScenarioConfig, Wavefront};

use umimo_pipeline::config::RunConfig;
use umimo_pipeline::error::{PipelineError, Result};
use umimo_pipeline::manifest::{import_external, DatasetManifest};
use umimo_pipeline::records::{parse_geometry, MpcList};
use umimo_pipeline::tensor_io::{load_tensor, load_waveform, save_tensor, save_waveform};
use umimo_pipeline::{run_manifest_suite, run_scenario_suite, write_reports};

#[derive(Parser)]
#[command(name = "umimo", version, about = "Ultra-massive MIMO channel synthesis, sounding and characterization")]
struct Cli {
    /// Master random seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a channel tensor for one link.
    Synth(SynthArgs),
    /// Emulate a PN sounding of a channel tensor plus a chamber reference.
    Sound(SoundArgs),
    /// Calibrate a measured waveform against a chamber reference.
    Calibrate(CalibrateArgs),
    /// Estimate multipath components from a calibrated tensor.
    Sage(SageArgs),
    /// Fit CI/FI path-loss models or COST 235 foliage models to samples.
    PathlossFit(PathlossArgs),
    /// Delay and angular spreads and a power-delay-angle grid of an MPC list.
    Stats(StatsArgs),
    /// Spatial non-stationarity metrics of a tensor.
    Sns(SnsArgs),
    /// Channel hardening across a set of measurement points.
    Chd(ChdArgs),
    /// Capacity samples, distribution fits and CDF.
    Capacity(CapacityArgs),
    /// Run the scenario suite and write reports.
    Suite(SuiteArgs),
    /// Build a dataset manifest from a metadata table.
    Import(ImportArgs),
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    carrier_hz: Option<f64>,
    #[arg(long)]
    bandwidth_hz: Option<f64>,
}

impl GridArgs {
    fn resolve(&self, cfg: &RunConfig) -> (f64, f64) {
        (
            self.carrier_hz.unwrap_or(cfg.suite.carrier_hz),
            self.bandwidth_hz.unwrap_or(cfg.suite.bandwidth_hz),
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WavefrontArg {
    Auto,
    Spherical,
    Planar,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "NF_LOS")]
    class: ScenarioClass,
    #[arg(long, default_value_t = 20.0)]
    distance_m: f64,
    #[arg(long, default_value_t = 0.0)]
    foliage_depth_m: f64,
    #[arg(long)]
    tx_array: Option<String>,
    #[arg(long)]
    rx_array: Option<String>,
    #[arg(long, default_value_t = 1023)]
    num_freq: usize,
    #[arg(long, value_enum, default_value = "auto")]
    wavefront: WavefrontArg,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct SoundArgs {
    /// Channel tensor to sound (snapshot 0).
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    ripple_db: Option<f64>,
    #[arg(long)]
    d_ane_m: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    cal: PathBuf,
    #[arg(long)]
    d_ane_m: Option<f64>,
    #[arg(long)]
    carrier_hz: Option<f64>,
}

#[derive(Args)]
struct SageArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    tx_array: Option<String>,
    #[arg(long)]
    rx_array: Option<String>,
    #[arg(long)]
    window_rx: Option<usize>,
    #[arg(long)]
    window_tx: Option<usize>,
    #[arg(long)]
    max_paths: Option<usize>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct PathlossArgs {
    /// CSV with columns distance_m, pl_db.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// CSV with columns depth_m, freq_mhz, excess_db.
    #[arg(long)]
    foliage: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    d0_m: f64,
    #[arg(long)]
    carrier_hz: Option<f64>,
    #[arg(long, value_enum, default_value = "out-of-leaf")]
    leaf: LeafArg,
    /// Fit the COST 235 frequency exponent instead of fixing it.
    #[arg(long)]
    free_b: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LeafArg {
    OutOfLeaf,
    InLeaf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    mpcs: PathBuf,
    #[arg(long, default_value_t = 64)]
    delay_bins: usize,
    #[arg(long, default_value_t = 72)]
    angle_bins: usize,
    #[arg(long, default_value_t = 1e-6)]
    max_delay_s: f64,
}

#[derive(Args)]
struct SnsArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct ChdArgs {
    /// One tensor per measurement point.
    #[arg(long, num_args = 2.., required = true)]
    tensors: Vec<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    PerMatrix,
    Ensemble,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long, conflicts_with = "iid")]
    tensor: Option<PathBuf>,
    /// Draw i.i.d. Rayleigh matrices `N_RXxN_TX:DRAWS`, e.g. 64x128:2000.
    #[arg(long)]
    iid: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, value_enum, default_value = "per-matrix")]
    normalization: NormArg,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct SuiteArgs {
    /// Analyse a dataset manifest instead of synthesizing links.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long, default_value = "external import")]
    note: String,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::create_dir_all(&self.out).map_err(|e| PipelineError::io(&self.out, e))?;
        std::fs::write(&p, serde_json::to_string_pretty(value)?).map_err(|e| PipelineError::io(&p, e))?;
        Ok(p)
    }
}

fn wavefront_for(arg: WavefrontArg, class: ScenarioClass) -> Wavefront {
    match arg {
        WavefrontArg::Spherical => Wavefront::Spherical,
        WavefrontArg::Planar => Wavefront::Planar,
        WavefrontArg::Auto if class.is_near_field() => Wavefront::Spherical,
        WavefrontArg::Auto => Wavefront::Planar,
    }
}

#[derive(Serialize)]
struct SynthSummary {
    seed: u64,
    scenario: ScenarioConfig,
    n_paths: usize,
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<i32> {
    let s = &ctx.cfg.suite;
    let (fc, bw) = a.grid.resolve(&ctx.cfg);
    let tx = parse_geometry(a.tx_array.as_deref().unwrap_or(&s.tx_array))?;
    let rx = parse_geometry(a.rx_array.as_deref().unwrap_or(&s.rx_array))?;
    let mut sc = ScenarioConfig::link(a.class, tx, rx, a.distance_m, s.tx_height_m, s.rx_height_m)?;
    sc.carrier_hz = fc;
    sc.bandwidth_hz = bw;
    sc.num_freq = a.num_freq;
    sc.foliage_depth_m = a.foliage_depth_m;
    sc.seed = ctx.cfg.seed;
    sc.validate()?;
    let mut model = ScatterModel::for_class(a.class);
    model.foliage = s.leaf_state.original();
    let mpcs = model.generate(&sc, &mut ChaCha8Rng::seed_from_u64(ctx.cfg.seed))?;
    let h = synth_channel(&sc, &mpcs, wavefront_for(a.wavefront, a.class))?;
    save_tensor(&ctx.path("channel.umct"), &h)?;
    MpcList::new(fc, Some(ctx.cfg.seed), &mpcs).save(&ctx.path("mpcs.json"))?;
    ctx.write_json(
        "scenario.json",
        &SynthSummary {
            seed: ctx.cfg.seed,
            scenario: sc,
            n_paths: mpcs.len(),
        },
    )?;
    println!("{} paths, tensor {:?} -> {}", mpcs.len(), h.dims(), ctx.out.display());
    Ok(0)
}

fn sound(ctx: &Ctx, a: &SoundArgs) -> Result<i32> {
    let s = &ctx.cfg.suite;
    let (fc, bw) = a.grid.resolve(&ctx.cfg);
    let h = load_tensor(&a.tensor, fc, bw)?;
    let pn = gen_pn(s.pn_register_width, s.pn_polynomial, 1)?;
    let cir = Cir::from_tensor(&h, 0)?;
    let ripple = a.ripple_db.unwrap_or(s.ripple_peak_to_peak_db);
    let response = SounderResponse {
        g_sys: if ripple > 0.0 {
            FrontEndResponse::Ripple {
                peak_to_peak_db: ripple,
                period_hz: s.ripple_period_hz,
                phase_rad: 0.3,
                group_delay_s: 2e-9,
            }
        } else {
            FrontEndResponse::Flat
        },
        ..SounderResponse::default()
    };
    let seed = ctx.cfg.seed;
    let clean = sound_link(&cir, &pn, &response, f64::NEG_INFINITY, s.oversample, seed)?;
    let noise = 10.0 * clean.mean_power().log10() - a.snr_db.unwrap_or(s.sounding_snr_db);
    let y = sound_link(&cir, &pn, &response, noise, s.oversample, seed.wrapping_add(1))?;
    let d_ane = a.d_ane_m.unwrap_or(s.chamber_distance_m);
    let cal = chamber_cir(d_ane, fc, bw, pn.len())?;
    let y_cal = sound_link(&cal, &pn, &response, noise, s.oversample, seed.wrapping_add(2))?;
    save_waveform(&ctx.path("meas.umcw"), &y)?;
    save_waveform(&ctx.path("cal.umcw"), &y_cal)?;
    println!("noise floor {noise:.2} dBm per sample -> {}", ctx.out.display());
    Ok(0)
}

fn calibrate(ctx: &Ctx, a: &CalibrateArgs) -> Result<i32> {
    let y = load_waveform(&a.meas)?;
    let y_cal = load_waveform(&a.cal)?;
    let d_ane = a.d_ane_m.unwrap_or(ctx.cfg.suite.chamber_distance_m);
    let fc = a.carrier_hz.unwrap_or(ctx.cfg.suite.carrier_hz);
    let h = ota_calibrate(&y, &y_cal, d_ane, fc)?.to_tensor()?;
    save_tensor(&ctx.path("calibrated.umct"), &h)?;
    println!("calibrated tensor {:?} -> {}", h.dims(), ctx.out.display());
    Ok(0)
}

fn sage(ctx: &Ctx, a: &SageArgs) -> Result<i32> {
    let s = &ctx.cfg.suite;
    let (fc, bw) = a.grid.resolve(&ctx.cfg);
    let h = load_tensor(&a.tensor, fc, bw)?;
    let tx = parse_geometry(a.tx_array.as_deref().unwrap_or(&s.tx_array))?;
    let rx = parse_geometry(a.rx_array.as_deref().unwrap_or(&s.rx_array))?;
    let cfg = SageConfig {
        window_rx: a.window_rx.unwrap_or(s.sage_window_rx.min(h.n_rx())),
        window_tx: a.window_tx.unwrap_or(s.sage_window_tx.min(h.n_tx())),
        max_paths: a.max_paths.unwrap_or(s.sage_max_paths),
        dynamic_range_db: s.sage_dynamic_range_db,
        ..SageConfig::default()
    };
    let r = sage_estimate(&h, &tx, &rx, &cfg)?;
    MpcList::new(fc, Some(ctx.cfg.seed), &r.mpcs).save(&ctx.path("mpcs.json"))?;
    println!(
        "{} paths, residual {:.2} dB, {} sweeps, converged {}",
        r.mpcs.len(),
        r.residual_power_db,
        r.iterations,
        r.converged
    );
    for m in &r.mpcs {
        println!(
            "  {:8.2} dB  {:9.3} ns  AoD {:7.2}  AoA {:7.2}  EoD {:6.2}  EoA {:6.2} deg",
            m.power_db(),
            m.delay * 1e9,
            m.aaod.to_degrees(),
            m.aaoa.to_degrees(),
            m.eaod.to_degrees(),
            m.eaoa.to_degrees()
        );
    }
    Ok(0)
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(serde::Deserialize)]
struct PlRow {
    distance_m: f64,
    pl_db: f64,
}

fn print_fit(f: &FitResult) {
    let params: Vec<String> = f.params.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    println!(
        "{:12} {}  sigma {:.2} dB  rmse {:.2} dB  n {}",
        f.model.label(),
        params.join(" "),
        f.sigma_db,
        f.rmse_db,
        f.n
    );
}

fn pathloss_fit(ctx: &Ctx, a: &PathlossArgs) -> Result<i32> {
    if a.samples.is_none() && a.foliage.is_none() {
        return Err(PipelineError::Config("give --samples and/or --foliage".into()));
    }
    let mut fits = Vec::new();
    if let Some(p) = &a.samples {
        let rows: Vec<PlRow> = read_csv(p)?;
        let samples = rows
            .iter()
            .map(|r| PathLossSample::new(r.distance_m, r.pl_db, ScenarioClass::NfLos, 0.0))
            .collect::<umimo_core::Result<Vec<_>>>()?;
        let fc = a.carrier_hz.unwrap_or(ctx.cfg.suite.carrier_hz);
        fits.push(fit_ci(&samples, fc, a.d0_m)?);
        fits.push(fit_fi(&samples, a.d0_m)?);
    }
    if let Some(p) = &a.foliage {
        let samples: Vec<FoliageSample> = read_csv::<FoliageRow>(p)?
            .into_iter()
            .map(|r| FoliageSample {
                depth_m: r.depth_m,
                freq_mhz: r.freq_mhz,
                excess_db: r.excess_db,
            })
            .collect();
        let leaf = match a.leaf {
            LeafArg::OutOfLeaf => LeafState::OutOfLeaf,
            LeafArg::InLeaf => LeafState::InLeaf,
        };
        let b = (!a.free_b).then(|| leaf.original().b);
        fits.push(fit_cost235(&samples, leaf, b)?);
    }
    for f in &fits {
        print_fit(f);
    }
    ctx.write_json("pathloss_fit.json", &fits)?;
    Ok(0)
}

#[derive(serde::Deserialize)]
struct FoliageRow {
    depth_m: f64,
    freq_mhz: f64,
    excess_db: f64,
}

fn stats(ctx: &Ctx, a: &StatsArgs) -> Result<i32> {
    let mpcs = MpcList::load(&a.mpcs)?.to_mpcs()?;
    let s = spread_stats(&mpcs)?;
    println!(
        "RMS DS {:.2} ns  ASA {:.2}  ASD {:.2}  ESD {:.2} deg{}",
        s.rms_ds_s * 1e9,
        s.asa_deg,
        s.asd_deg,
        s.esd_deg,
        if s.saturated { "  (saturated)" } else { "" }
    );
    let grid = pdap_grid(&mpcs, a.delay_bins, a.angle_bins, a.max_delay_s, -200.0)?;
    let p = ctx.path("pdap.csv");
    std::fs::create_dir_all(&ctx.out).map_err(|e| PipelineError::io(&ctx.out, e))?;
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["delay_s", "aoa_rad", "power_db"])?;
    for (i, row) in grid.power_db().iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w.write_record([
                format!("{:.4e}", (i as f64 + 0.5) * grid.delay_bin_s),
                format!("{:.4}", -std::f64::consts::PI + (j as f64 + 0.5) * grid.angle_bin_rad),
                format!("{v:.2}"),
            ])?;
        }
    }
    w.flush().map_err(|e| PipelineError::io(&p, e))?;
    ctx.write_json("spreads.json", &s)?;
    Ok(0)
}

#[derive(Serialize)]
struct SnsSummary {
    cscf_all_pairs: Option<f64>,
    cscf_adjacent: Option<f64>,
    peak_tap: usize,
    trends: umimo_core::newchar::ApertureTrends,
}

fn sns(ctx: &Ctx, a: &SnsArgs) -> Result<i32> {
    let (fc, bw) = a.grid.resolve(&ctx.cfg);
    let h = load_tensor(&a.tensor, fc, bw)?;
    let cir = Cir::from_tensor(&h, 0)?;
    let peak_tap = (0..cir.n_taps())
        .max_by(|&x, &y| {
            let px: f64 = (0..cir.n_rx()).map(|q| cir.pair(q, 0)[x].norm_sqr()).sum();
            let py: f64 = (0..cir.n_rx()).map(|q| cir.pair(q, 0)[y].norm_sqr()).sum();
            px.total_cmp(&py)
        })
        .unwrap_or(0);
    let gains: Vec<_> = (0..cir.n_rx()).map(|q| cir.pair(q, 0)[peak_tap]).collect();
    let trends = fit_aperture_trends(&AperturePathTrace::from_gains(&gains)?)?;
    let (all, adj) = if h.n_rx() >= 2 {
        (
            Some(cscf(&h, CscfPairing::AllRxPairs)?),
            Some(cscf(&h, CscfPairing::AdjacentRx)?),
        )
    } else {
        (None, None)
    };
    let out = SnsSummary {
        cscf_all_pairs: all,
        cscf_adjacent: adj,
        peak_tap,
        trends,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    ctx.write_json("sns.json", &out)?;
    Ok(0)
}

fn chd(ctx: &Ctx, a: &ChdArgs) -> Result<i32> {
    let (fc, bw) = a.grid.resolve(&ctx.cfg);
    let first = load_tensor(&a.tensors[0], fc, bw)?;
    let n_rx = first.n_rx();
    let sizes: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2))
        .take_while(|n| *n <= n_rx)
        .chain((!n_rx.is_power_of_two()).then_some(n_rx))
        .collect();
    let mut ens = HardeningEnsemble::new(sizes);
    ens.push(&first)?;
    for p in &a.tensors[1..] {
        ens.push(&load_tensor(p, fc, bw)?)?;
    }
    let curve = chd_curve(&ens)?;
    let p = ctx.path("chd.csv");
    std::fs::create_dir_all(&ctx.out).map_err(|e| PipelineError::io(&ctx.out, e))?;
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["n_rx", "chd", "chd_db"])?;
    for (n, v) in &curve {
        println!("{n:4}  {v:.4e}  {:.2} dB", 10.0 * v.log10());
        w.write_record([n.to_string(), format!("{v:.6e}"), format!("{:.2}", 10.0 * v.log10())])?;
    }
    w.flush().map_err(|e| PipelineError::io(&p, e))?;
    Ok(0)
}

fn parse_iid(spec: &str) -> Result<(usize, usize, usize)> {
    let bad = || PipelineError::Config(format!("--iid expects N_RXxN_TX:DRAWS, got '{spec}'"));
    let (dims, draws) = spec.split_once(':').ok_or_else(bad)?;
    let (r, t) = dims.split_once('x').ok_or_else(bad)?;
    Ok((
        r.parse().map_err(|_| bad())?,
        t.parse().map_err(|_| bad())?,
        draws.parse().map_err(|_| bad())?,
    ))
}

#[derive(Serialize)]
struct CapacitySummary {
    seed: u64,
    snr_db: f64,
    n: usize,
    mean: f64,
    std: f64,
    normal: umimo_core::capacity::DistFit,
    gmm2: Option<umimo_core::capacity::DistFit>,
    selected: umimo_core::capacity::DistKind,
}

fn capacity_cmd(ctx: &Ctx, a: &CapacityArgs) -> Result<i32> {
    let (fc, bw) = a.grid.resolve(&ctx.cfg);
    let h = match (&a.tensor, &a.iid) {
        (Some(p), None) => load_tensor(p, fc, bw)?,
        (None, Some(spec)) => {
            let (r, t, d) = parse_iid(spec)?;
            iid_rayleigh(r, t, d, 1, ctx.cfg.seed)?
        }
        _ => return Err(PipelineError::Config("give exactly one of --tensor or --iid".into())),
    };
    let norm = match a.normalization {
        NormArg::PerMatrix => Normalization::PerMatrix,
        NormArg::Ensemble => Normalization::Ensemble,
    };
    let c = capacity_with(&h, a.snr_db, norm)?;
    let normal = fit_normal(&c.values)?;
    let gmm2 = fit_gmm2(&c.values, ctx.cfg.suite.gmm_max_iter, 1e-8, ctx.cfg.seed).ok();
    let selected = gmm2.as_ref().map(|g| select_by_bic(&normal, g).kind).unwrap_or(normal.kind);
    let summary = CapacitySummary {
        seed: ctx.cfg.seed,
        snr_db: a.snr_db,
        n: c.values.len(),
        mean: c.mean(),
        std: c.std(),
        normal,
        gmm2,
        selected,
    };
    println!(
        "{} samples  mean {:.3}  std {:.3} bit/s/Hz  selected {:?}",
        summary.n, summary.mean, summary.std, summary.selected
    );
    ctx.write_json("capacity.json", &summary)?;
    let p = ctx.path("capacity_cdf.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["capacity_bps_hz", "cdf"])?;
    for (v, f) in EmpiricalCdf::new(&c.values)?.points() {
        w.write_record([format!("{v:.4}"), format!("{f:.6}")])?;
    }
    w.flush().map_err(|e| PipelineError::io(&p, e))?;
    Ok(0)
}

fn suite(ctx: &Ctx, a: &SuiteArgs) -> Result<i32> {
    let report = match &a.manifest {
        Some(p) => {
            let m = DatasetManifest::load(p)?;
            let base = p.parent().unwrap_or(Path::new("."));
            run_manifest_suite(&ctx.cfg, &m, base)?
        }
        None => run_scenario_suite(&ctx.cfg)?,
    };
    let files = write_reports(&report, &ctx.out)?;
    for w in &report.warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }
    for f in &report.failures {
        eprintln!("failure: {}: {}", f.item, f.error);
    }
    for c in &report.checks {
        println!(
            "[{}] {}: expected {:.4}, observed {:.4} (tolerance {:.4})",
            if c.pass { "ok" } else { "off" },
            c.name,
            c.expected,
            c.observed,
            c.tolerance
        );
    }
    println!(
        "{} links, {} failures, {} files in {}",
        report.links.len(),
        report.failures.len(),
        files.len(),
        ctx.out.display()
    );
    Ok(report.exit_code())
}

fn import(ctx: &Ctx, a: &ImportArgs) -> Result<i32> {
    let m = import_external(&a.metadata, &a.note)?;
    let p = ctx.path("manifest.json");
    m.save(&p)?;
    println!("{} links -> {}", m.links.len(), p.display());
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    let ctx = Ctx {
        out: cfg.out_dir.clone(),
        cfg,
    };
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Sound(a) => sound(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Sage(a) => sage(&ctx, a),
        Command::PathlossFit(a) => pathloss_fit(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Sns(a) => sns(&ctx, a),
        Command::Chd(a) => chd(&ctx, a),
        Command::Capacity(a) => capacity_cmd(&ctx, a),
        Command::Suite(a) => suite(&ctx, a),
        Command::Import(a) => import(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

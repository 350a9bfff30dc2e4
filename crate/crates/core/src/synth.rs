//! Geometric multipath channel synthesis and i.i.d. Rayleigh references.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{ArrayGeometry, ElementPattern, Orientation, Vec3};
use crate::mpc::Mpc;
use crate::propagation::{foliage_excess_loss_db, free_space_gain, Cost235Params};
use crate::tensor::{ChannelTensor, FrequencyGrid};
use crate::{SPEED_OF_LIGHT, DEFAULT_BANDWIDTH_HZ, DEFAULT_CARRIER_HZ, DEFAULT_NOISE_FLOOR_DBM};

/// Angular tolerance for accepting a (delay, AoD, AoA) triple as a
/// physically consistent single-bounce or direct path.
pub const GEOMETRY_TOLERANCE_RAD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioClass {
    NfLos,
    NfFoliage,
    FfFoliage,
    FfLos,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 4] = [
        ScenarioClass::NfLos,
        ScenarioClass::NfFoliage,
        ScenarioClass::FfFoliage,
        ScenarioClass::FfLos,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioClass::NfLos => "NF_LOS",
            ScenarioClass::NfFoliage => "NF_FOLIAGE",
            ScenarioClass::FfFoliage => "FF_FOLIAGE",
            ScenarioClass::FfLos => "FF_LOS",
        }
    }

    pub fn is_foliage(self) -> bool {
        matches!(self, ScenarioClass::NfFoliage | ScenarioClass::FfFoliage)
    }

    pub fn is_near_field(self) -> bool {
        matches!(self, ScenarioClass::NfLos | ScenarioClass::NfFoliage)
    }
}

impl std::fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ScenarioClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "NF_LOS" => Ok(ScenarioClass::NfLos),
            "NF_FOLIAGE" => Ok(ScenarioClass::NfFoliage),
            "FF_FOLIAGE" => Ok(ScenarioClass::FfFoliage),
            "FF_LOS" => Ok(ScenarioClass::FfLos),
            other => Err(Error::InvalidArgument(format!("unknown scenario class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wavefront {
    Spherical,
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_geometry: ArrayGeometry,
    pub rx_geometry: ArrayGeometry,
    pub link_distance_m: f64,
    pub foliage_depth_m: f64,
    pub scenario_class: ScenarioClass,
    pub noise_floor_dbm: f64,
    pub seed: u64,
    /// Frequency bins across the band; `num_freq / bandwidth_hz` is the delay window.
    pub num_freq: usize,
    pub num_snapshots: usize,
    pub element_pattern: ElementPattern,
}

impl ScenarioConfig {
    /// Link with the transmitter at height `tx_height_m` and the receiver
    /// at `rx_height_m`, `distance_m` apart in 3D, arrays facing each other
    /// in azimuth.
    pub fn link(
        class: ScenarioClass,
        tx: ArrayGeometry,
        rx: ArrayGeometry,
        distance_m: f64,
        tx_height_m: f64,
        rx_height_m: f64,
    ) -> Result<Self> {
        let dh = tx_height_m - rx_height_m;
        ensure(distance_m > dh.abs(), || {
            Error::InvalidArgument(format!(
                "3D distance {distance_m} m shorter than height difference {dh} m"
            ))
        })?;
        let horiz = (distance_m * distance_m - dh * dh).sqrt();
        let tx_tilt = tx.orientation.tilt_rad;
        let tx = tx
            .with_origin(Vec3::new(0.0, 0.0, tx_height_m))
            .with_orientation(Orientation::new(0.0, tx_tilt));
        let rx = rx
            .with_origin(Vec3::new(horiz, 0.0, rx_height_m))
            .with_orientation(Orientation::new(PI, 0.0));
        let cfg = Self {
            carrier_hz: DEFAULT_CARRIER_HZ,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            tx_geometry: tx,
            rx_geometry: rx,
            link_distance_m: distance_m,
            foliage_depth_m: 0.0,
            scenario_class: class,
            noise_floor_dbm: DEFAULT_NOISE_FLOOR_DBM,
            seed: 0,
            num_freq: 1023,
            num_snapshots: 1,
            element_pattern: ElementPattern::Isotropic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.bandwidth_hz > 0.0, || Error::Config("bandwidth_hz must be > 0".into()))?;
        ensure(self.carrier_hz > self.bandwidth_hz / 2.0, || {
            Error::Config("carrier_hz must exceed bandwidth_hz / 2".into())
        })?;
        ensure(self.link_distance_m > 0.0, || Error::Config("link_distance_m must be > 0".into()))?;
        ensure(self.foliage_depth_m >= 0.0, || Error::Config("foliage_depth_m must be >= 0".into()))?;
        ensure(self.num_freq >= 1 && self.num_snapshots >= 1, || {
            Error::Config("num_freq and num_snapshots must be >= 1".into())
        })?;
        self.tx_geometry.validate()?;
        self.rx_geometry.validate()
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid::band(self.carrier_hz, self.bandwidth_hz, self.num_freq)
    }

    pub fn delay_window_s(&self) -> f64 {
        self.grid().delay_window_s()
    }
}

/// Per-pair response of one path: amplitude `A[q][p]` and effective path
/// length `L[q][p]`, so that `H_qp(f) += A_qp exp(-j 2 pi f L_qp / c)`.
struct PairResponse {
    amp: Vec<f64>,
    phase0: Vec<Complex64>,
    length: Vec<f64>,
}

/// Build `H(f) = sum_l alpha_l a_rx(l) a_tx(l)^T exp(-j 2 pi f tau_l)`
/// on the scenario's frequency grid. Phases are evaluated at each bin's
/// absolute frequency.
pub fn synth_channel(scenario: &ScenarioConfig, mpcs: &[Mpc], wavefront: Wavefront) -> Result<ChannelTensor> {
    scenario.validate()?;
    ensure(!mpcs.is_empty(), || Error::InvalidArgument("at least one MPC required".into()))?;
    let grid = scenario.grid();
    let window = grid.delay_window_s();
    let n_rx = scenario.rx_geometry.len();
    let n_tx = scenario.tx_geometry.len();
    let n_f = grid.n;

    let mut slab = vec![Complex64::new(0.0, 0.0); n_f * n_rx * n_tx];
    for mpc in mpcs {
        mpc.validate()?;
        ensure(mpc.delay < window, || Error::OutOfWindow {
            delay_s: mpc.delay,
            window_s: window,
        })?;
        let resp = match wavefront {
            Wavefront::Planar => planar_pairs(scenario, mpc),
            Wavefront::Spherical => spherical_pairs(scenario, mpc)?,
        };
        accumulate(&mut slab, &resp, &grid, mpc.amplitude, n_rx * n_tx);
    }

    let mut data = Vec::with_capacity(slab.len() * scenario.num_snapshots);
    for _ in 0..scenario.num_snapshots {
        data.extend_from_slice(&slab);
    }
    ChannelTensor::from_data(scenario.num_snapshots, n_rx, n_tx, grid.frequencies(), data)
}

fn accumulate(slab: &mut [Complex64], resp: &PairResponse, grid: &FrequencyGrid, alpha: Complex64, pairs: usize) {
    let f0 = grid.freq(0);
    for i in 0..pairs {
        if resp.amp[i] == 0.0 {
            continue;
        }
        let l = resp.length[i];
        let mut ph = Complex64::from_polar(1.0, -2.0 * PI * f0 * l / SPEED_OF_LIGHT) * resp.phase0[i];
        let step = Complex64::from_polar(1.0, -2.0 * PI * grid.spacing_hz * l / SPEED_OF_LIGHT);
        let a = alpha * resp.amp[i];
        for k in 0..grid.n {
            // re-anchor periodically so the recurrence cannot drift
            if k % 256 == 0 && k > 0 {
                ph = Complex64::from_polar(1.0, -2.0 * PI * grid.freq(k) * l / SPEED_OF_LIGHT) * resp.phase0[i];
            }
            slab[k * pairs + i] += a * ph;
            ph *= step;
        }
    }
}

fn planar_pairs(s: &ScenarioConfig, mpc: &Mpc) -> PairResponse {
    let tx = &s.tx_geometry;
    let rx = &s.rx_geometry;
    let u_tx = mpc.departure_dir();
    let u_rx = mpc.arrival_dir();
    let pairs = rx.len() * tx.len();
    let mut amp = Vec::with_capacity(pairs);
    let mut length = Vec::with_capacity(pairs);
    let g_tx: Vec<f64> = tx.normals.iter().map(|n| s.element_pattern.amplitude(n, &u_tx)).collect();
    for (y, nr) in rx.elements.iter().zip(&rx.normals) {
        let g_r = s.element_pattern.amplitude(nr, &u_rx);
        let lr = u_rx.dot(y);
        for (x, gt) in tx.elements.iter().zip(&g_tx) {
            amp.push(g_r * gt);
            length.push(mpc.delay * SPEED_OF_LIGHT - lr - u_tx.dot(x));
        }
    }
    PairResponse {
        amp,
        phase0: vec![Complex64::new(1.0, 0.0); pairs],
        length,
    }
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

fn spherical_pairs(s: &ScenarioConfig, mpc: &Mpc) -> Result<PairResponse> {
    let tx = &s.tx_geometry;
    let rx = &s.rx_geometry;
    let xs = tx.global_positions();
    let ys = rx.global_positions();
    let path = mpc.delay * SPEED_OF_LIGHT;
    let link = rx.origin - tx.origin;
    let dist = link.norm();
    let u_tx = tx.to_global_direction(&mpc.departure_dir());
    let u_rx = rx.to_global_direction(&mpc.arrival_dir());
    let pattern = s.element_pattern;

    let pairs = ys.len() * xs.len();
    let mut amp = Vec::with_capacity(pairs);
    let mut length = Vec::with_capacity(pairs);

    if (path - dist).abs() <= 1e-9 * dist.max(1.0) {
        ensure(
            angle_between(&u_tx, &link) < GEOMETRY_TOLERANCE_RAD
                && angle_between(&u_rx, &(-link)) < GEOMETRY_TOLERANCE_RAD,
            || Error::InconsistentGeometry("direct-path delay with non-facing angles".into()),
        )?;
        for (y, nr) in ys.iter().zip(&rx.normals) {
            let nr = rx.to_global_direction(nr);
            for (x, nt) in xs.iter().zip(&tx.normals) {
                let nt = tx.to_global_direction(nt);
                let v = y - x;
                let d = v.norm();
                ensure(d > 0.0, || Error::Singularity("co-located elements".into()))?;
                let dir = v / d;
                let g = pattern.amplitude(&nt, &dir) * pattern.amplitude(&nr, &(-dir));
                amp.push(g * dist / d);
                length.push(d);
            }
        }
    } else {
        ensure(path > dist, || {
            Error::InconsistentGeometry(format!(
                "path length {path:.4} m shorter than the link distance {dist:.4} m"
            ))
        })?;
        let back = tx.origin - rx.origin;
        let denom = 2.0 * (back.dot(&u_tx) + path);
        let r1 = (path * path - dist * dist) / denom;
        let r2 = path - r1;
        ensure(r1 > 0.0 && r2 > 0.0, || {
            Error::InconsistentGeometry("no bounce point satisfies delay and departure angle".into())
        })?;
        let bounce = tx.origin + u_tx * r1;
        ensure(angle_between(&(bounce - rx.origin), &u_rx) < GEOMETRY_TOLERANCE_RAD, || {
            Error::InconsistentGeometry("arrival angle inconsistent with delay and departure angle".into())
        })?;
        let tx_legs: Vec<(f64, f64)> = xs
            .iter()
            .zip(&tx.normals)
            .map(|(x, n)| {
                let v = bounce - x;
                let d = v.norm();
                (d, pattern.amplitude(&tx.to_global_direction(n), &(v / d)))
            })
            .collect();
        for (y, nr) in ys.iter().zip(&rx.normals) {
            let v = bounce - y;
            let dr = v.norm();
            let gr = pattern.amplitude(&rx.to_global_direction(nr), &(v / dr));
            for &(dt, gt) in &tx_legs {
                amp.push(gr * gt * (r1 / dt) * (r2 / dr));
                length.push(dt + dr);
            }
        }
    }
    Ok(PairResponse {
        amp,
        phase0: vec![Complex64::new(1.0, 0.0); pairs],
        length,
    })
}

/// Tensor of i.i.d. `CN(0, 1)` entries on the default 15 GHz / 250 MHz grid.
pub fn iid_rayleigh(n_rx: usize, n_tx: usize, n_s: usize, n_f: usize, seed: u64) -> Result<ChannelTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n_s * n_f * n_rx * n_tx;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..total)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        })
        .collect();
    let axis = FrequencyGrid::band(DEFAULT_CARRIER_HZ, DEFAULT_BANDWIDTH_HZ, n_f).frequencies();
    ChannelTensor::from_data(n_s, n_rx, n_tx, axis, data)
}

/// Add circularly-symmetric white Gaussian noise of per-sample power `variance`.
pub fn add_awgn(tensor: &mut ChannelTensor, variance: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (variance / 2.0).sqrt();
    for v in tensor.data_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(re * s, im * s);
    }
}

/// Random single-bounce scattering environment for one scenario class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterModel {
    pub num_scatterers: usize,
    /// Reflection loss range of scattered paths, dB.
    pub reflection_loss_db: (f64, f64),
    /// Lateral half-width of the scatterer region around the link, metres.
    pub lateral_extent_m: f64,
    /// Height range of scatterers, metres.
    pub height_range_m: (f64, f64),
    /// Excess loss applied to the direct path for foliage classes.
    pub foliage: Cost235Params,
}

impl ScatterModel {
    pub fn for_class(class: ScenarioClass) -> Self {
        let (n, loss) = match class {
            ScenarioClass::NfLos => (4, (8.0, 20.0)),
            ScenarioClass::NfFoliage => (8, (6.0, 18.0)),
            ScenarioClass::FfFoliage => (14, (4.0, 14.0)),
            ScenarioClass::FfLos => (3, (10.0, 22.0)),
        };
        Self {
            num_scatterers: n,
            reflection_loss_db: loss,
            lateral_extent_m: 25.0,
            height_range_m: (0.5, 12.0),
            foliage: Cost235Params::OUT_OF_LEAF,
        }
    }

    /// Direct path plus `num_scatterers` single-bounce paths, amplitudes
    /// from free-space spreading over each path length. Paths are
    /// geometrically consistent, so they synthesise in either wavefront mode.
    pub fn generate(&self, scenario: &ScenarioConfig, rng: &mut impl Rng) -> Result<Vec<Mpc>> {
        let tx = &scenario.tx_geometry;
        let rx = &scenario.rx_geometry;
        let fc = scenario.carrier_hz;
        let dist = (rx.origin - tx.origin).norm();
        let mut los_gain = free_space_gain(dist, fc);
        if scenario.scenario_class.is_foliage() && scenario.foliage_depth_m > 0.0 {
            let extra = foliage_excess_loss_db(scenario.foliage_depth_m, fc / 1e6, self.foliage)?;
            los_gain *= 10f64.powf(-extra / 20.0);
        }
        let los_phase = -2.0 * PI * fc * dist / SPEED_OF_LIGHT;
        let mut out = vec![Mpc::line_of_sight(tx, rx, Complex64::from_polar(los_gain, los_phase))?];

        let window = scenario.delay_window_s();
        let a = tx.origin;
        let b = rx.origin;
        let axis = (b - a).normalize();
        let lateral = Vec3::new(-axis.y, axis.x, 0.0).normalize();
        let mut attempts = 0;
        while out.len() < self.num_scatterers + 1 && attempts < 100 * (self.num_scatterers + 1) {
            attempts += 1;
            let t: f64 = rng.gen_range(0.05..0.95);
            let side: f64 = rng.gen_range(-self.lateral_extent_m..self.lateral_extent_m);
            let h: f64 = rng.gen_range(self.height_range_m.0..self.height_range_m.1);
            let mut p = a + (b - a) * t + lateral * side;
            p.z = h;
            let l1 = (p - a).norm();
            let l2 = (p - b).norm();
            if l1 < 1.0 || l2 < 1.0 || (l1 + l2) / SPEED_OF_LIGHT >= 0.9 * window {
                continue;
            }
            let loss_db = rng.gen_range(self.reflection_loss_db.0..self.reflection_loss_db.1);
            let gain = free_space_gain(l1 + l2, fc) * 10f64.powf(-loss_db / 20.0);
            let phase = rng.gen_range(-PI..PI);
            out.push(Mpc::single_bounce(tx, rx, &p, Complex64::from_polar(gain, phase))?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn broadside_config(n_f: usize) -> ScenarioConfig {
        let tx = ArrayGeometry::ula(4, 0.01).unwrap();
        let rx = ArrayGeometry::ula(3, 0.01).unwrap();
        let mut cfg = ScenarioConfig::link(ScenarioClass::NfLos, tx, rx, 30.0, 0.0, 0.0).unwrap();
        cfg.num_freq = n_f;
        cfg
    }

    #[test]
    fn single_broadside_path_is_rank_one_phase() {
        let mut cfg = broadside_config(16);
        cfg.bandwidth_hz = 20e6;
        let tau = 1e-7;
        let m = Mpc::new(Complex64::new(1.0, 0.0), tau, 0.0, 0.0, 0.0, 0.0).unwrap();
        let h = synth_channel(&cfg, &[m], Wavefront::Planar).unwrap();
        for k in 0..16 {
            let f = h.freq_axis()[k];
            let want = Complex64::from_polar(1.0, -2.0 * PI * f * tau);
            for v in h.slice(0, k) {
                assert_abs_diff_eq!((v - want).norm(), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn delay_sets_phase_slope() {
        let cfg = broadside_config(64);
        let m = Mpc::new(Complex64::new(1.0, 0.0), 1e-7, 0.0, 0.0, 0.0, 0.0).unwrap();
        let h = synth_channel(&cfg, &[m], Wavefront::Planar).unwrap();
        let df = h.freq_axis()[1] - h.freq_axis()[0];
        let slope = (h.get(0, 1, 0, 0) * h.get(0, 0, 0, 0).conj()).arg() / df;
        let want = crate::geometry::wrap_angle(-2.0 * PI * 1e-7 * df) / df;
        assert_abs_diff_eq!(slope, want, epsilon = 1e-9 * want.abs());
        assert_abs_diff_eq!(-2.0 * PI * 1e-7 * df / df, -2.0 * PI * 1e-7, epsilon = 1e-18);
    }

    #[test]
    fn two_path_interference_period() {
        // |1 + e^{-j 2 pi f 100ns}|^2 repeats every 10 MHz
        let mut cfg = broadside_config(400);
        cfg.bandwidth_hz = 100e6; // 250 kHz bins, 40 bins per period
        let one = Complex64::new(1.0, 0.0);
        let mpcs = [
            Mpc::new(one, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap(),
            Mpc::new(one, 1e-7, 0.0, 0.0, 0.0, 0.0).unwrap(),
        ];
        let h = synth_channel(&cfg, &mpcs, Wavefront::Planar).unwrap();
        let p: Vec<f64> = (0..400).map(|k| h.get(0, k, 0, 0).norm_sqr()).collect();
        for k in 0..360 {
            assert_abs_diff_eq!(p[k], p[k + 40], epsilon = 1e-9);
            let f = h.freq_axis()[k];
            let oracle = 2.0 + 2.0 * (2.0 * PI * f * 1e-7).cos();
            assert_abs_diff_eq!(p[k], oracle, epsilon = 1e-8);
        }
    }

    #[test]
    fn out_of_window_rejected() {
        let cfg = broadside_config(16); // window 64 ns
        let m = Mpc::new(Complex64::new(1.0, 0.0), 1e-7, 0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            synth_channel(&cfg, &[m], Wavefront::Planar),
            Err(Error::OutOfWindow { .. })
        ));
    }

    #[test]
    fn linear_in_amplitudes() {
        let mut cfg = broadside_config(32);
        cfg.bandwidth_hz = 20e6;
        let m1 = Mpc::new(Complex64::new(0.3, 0.1), 2e-7, 0.2, -0.1, 0.05, 0.0).unwrap();
        let m2 = Mpc::new(Complex64::new(-0.2, 0.4), 5e-7, -0.4, 0.3, 0.0, 0.1).unwrap();
        let both = synth_channel(&cfg, &[m1, m2], Wavefront::Planar).unwrap();
        let mut sum = synth_channel(&cfg, &[m1], Wavefront::Planar).unwrap();
        sum.add_assign(&synth_channel(&cfg, &[m2], Wavefront::Planar).unwrap()).unwrap();
        for (a, b) in both.data().iter().zip(sum.data()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn spherical_los_matches_point_source_steering() {
        let tx = ArrayGeometry::custom(vec![Vec3::zeros()]).unwrap();
        let rx = ArrayGeometry::ula(64, 0.01).unwrap();
        let mut cfg = ScenarioConfig::link(ScenarioClass::NfLos, tx, rx, 25.0, 0.0, 0.0).unwrap();
        cfg.num_freq = 3;
        cfg.bandwidth_hz = 1e6;
        let m = Mpc::line_of_sight(&cfg.tx_geometry, &cfg.rx_geometry, Complex64::new(1.0, 0.0)).unwrap();
        let h = synth_channel(&cfg, &[m], Wavefront::Spherical).unwrap();
        let f = h.freq_axis()[1];
        let sv = crate::steering::steering_spherical(&cfg.rx_geometry, &cfg.tx_geometry.origin, f).unwrap();
        // H = alpha * (d_ref / d_n) exp(-j 2 pi f d_n / c) = sv * 4 pi d_ref f / c
        let scale = 4.0 * PI * 25.0 * f / SPEED_OF_LIGHT;
        for q in 0..64 {
            assert_abs_diff_eq!((h.get(0, 1, q, 0) - sv[q] * scale).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn spherical_bounce_consistency() {
        let tx = ArrayGeometry::planar(2, 2, 0.01).unwrap();
        let rx = ArrayGeometry::planar(2, 2, 0.01).unwrap();
        let cfg = ScenarioConfig::link(ScenarioClass::NfLos, tx, rx, 25.0, 10.0, 1.8).unwrap();
        let p = Vec3::new(12.0, 8.0, 3.0);
        let good = Mpc::single_bounce(&cfg.tx_geometry, &cfg.rx_geometry, &p, Complex64::new(1.0, 0.0)).unwrap();
        assert!(synth_channel(&cfg, &[good], Wavefront::Spherical).is_ok());
        let mut bad = good;
        bad.aaoa = crate::geometry::wrap_angle(bad.aaoa + 0.1);
        assert!(matches!(
            synth_channel(&cfg, &[bad], Wavefront::Spherical),
            Err(Error::InconsistentGeometry(_))
        ));
        // planar mode accepts the same path and agrees in the far field limit
        assert!(synth_channel(&cfg, &[bad], Wavefront::Planar).is_ok());
    }

    #[test]
    fn iid_rayleigh_statistics() {
        let t = iid_rayleigh(16, 16, 4, 1024, 7).unwrap();
        let n = t.data().len();
        assert!(n >= 1_000_000);
        let mean_p = t.energy() / n as f64;
        assert_abs_diff_eq!(mean_p, 1.0, epsilon = 0.01);
        let again = iid_rayleigh(16, 16, 4, 1024, 7).unwrap();
        assert_eq!(t, again);
        assert_ne!(t, iid_rayleigh(16, 16, 4, 1024, 8).unwrap());
    }

    #[test]
    fn scatter_model_produces_consistent_paths() {
        let tx = ArrayGeometry::planar(2, 4, 0.01).unwrap();
        let rx = ArrayGeometry::planar(2, 2, 0.01).unwrap();
        let mut cfg = ScenarioConfig::link(ScenarioClass::FfFoliage, tx, rx, 60.0, 16.5, 1.8).unwrap();
        cfg.foliage_depth_m = 5.0;
        cfg.num_freq = 64;
        cfg.bandwidth_hz = 10e6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mpcs = ScatterModel::for_class(ScenarioClass::FfFoliage).generate(&cfg, &mut rng).unwrap();
        assert_eq!(mpcs.len(), 15);
        assert!(synth_channel(&cfg, &mpcs, Wavefront::Spherical).is_ok());
        let los = free_space_gain(60.0, 15e9);
        assert!(mpcs[0].amplitude.norm() < los);
    }
}

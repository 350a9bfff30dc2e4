//! SAGE multipath estimation with subarray windowing.
//!
//! Each window of `window_rx x window_tx` elements is fitted with a
//! plane-wave wideband model
//! `H_k(q, p) = sum_l alpha_l a_rx(q, f_k) a_tx(p, f_k) exp(-j 2 pi f_k tau_l)`
//! where the steering vectors use the elements' full-array local positions,
//! so every window shares the array origin as phase reference. Paths are
//! added by successive interference cancellation and refined one at a time
//! (expectation: add the path's own contribution back onto the residual;
//! maximization: coordinate-wise search over delay, arrival direction,
//! departure direction, then the closed-form amplitude). Per-window
//! estimates are merged by clustering in delay and direction.
//!
//! A window only resolves the direction components spanned by its element
//! positions. A linear window measures one cone angle and a planar window
//! two; the missing component is completed towards the window's facing
//! direction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{angles_of, wrap_angle, ArrayGeometry, Vec3};
use crate::linalg::median;
use crate::mpc::{sort_by_power, Mpc};
use crate::tensor::ChannelTensor;
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageConfig {
    pub window_rx: usize,
    pub window_tx: usize,
    pub max_paths: usize,
    pub dynamic_range_db: f64,
    /// Relative residual-power change that ends the iterations.
    pub conv_tol: f64,
    pub max_iter: usize,
    /// Coarse delay search step, seconds.
    pub delay_grid_s: f64,
    /// Coarse angle search step, radians.
    pub angle_grid_rad: f64,
    /// Noise variance per frequency-domain sample; estimated from the
    /// delay-domain taps when `None`.
    pub noise_variance: Option<f64>,
    /// Gates for merging per-window estimates of the same path.
    pub merge_delay_gate_s: f64,
    pub merge_angle_gate_rad: f64,
}

impl Default for SageConfig {
    fn default() -> Self {
        Self {
            window_rx: 16,
            window_tx: 32,
            max_paths: 20,
            dynamic_range_db: 30.0,
            conv_tol: 1e-4,
            max_iter: 50,
            delay_grid_s: 2e-9,
            angle_grid_rad: 1f64.to_radians(),
            noise_variance: None,
            merge_delay_gate_s: 4e-9,
            merge_angle_gate_rad: 2f64.to_radians(),
        }
    }
}

impl SageConfig {
    /// 16 x 32 windows for links inside the Rayleigh distance.
    pub fn near_field() -> Self {
        Self::default()
    }

    /// 16 x 128 windows for far-field links.
    pub fn far_field() -> Self {
        Self {
            window_tx: 128,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        ensure(self.window_rx >= 1 && self.window_tx >= 1, || {
            Error::Config("window sizes must be >= 1".into())
        })?;
        ensure(self.delay_grid_s > 0.0 && self.angle_grid_rad > 0.0, || {
            Error::Config("search grids must be positive".into())
        })?;
        ensure(self.conv_tol > 0.0 && self.max_iter >= 1, || {
            Error::Config("conv_tol must be positive and max_iter >= 1".into())
        })?;
        ensure(self.dynamic_range_db > 0.0, || Error::Config("dynamic range must be positive".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageResult {
    /// Sorted by descending `|alpha|`.
    pub mpcs: Vec<Mpc>,
    /// Residual energy relative to the input energy, summed over windows.
    pub residual_power_db: f64,
    /// Total refinement sweeps over all windows.
    pub iterations: usize,
    pub converged: bool,
    /// Residual energy after every sweep, per window.
    pub residual_history: Vec<Vec<f64>>,
    /// Noise power per delay tap used by the threshold.
    pub noise_per_tap: f64,
}

/// A contiguous block of elements cut from a tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SubArrayWindow {
    pub rx_offset: usize,
    pub tx_offset: usize,
    pub tensor: ChannelTensor,
}

/// Offsets tiling `n` elements with windows of `w`; when `w` does not
/// divide `n` the last window is shifted back to end at `n`.
pub fn window_offsets(n: usize, w: usize) -> Result<Vec<usize>> {
    ensure(w >= 1 && w <= n, || {
        Error::Config(format!("window of {w} elements does not fit an array of {n}"))
    })?;
    let mut out: Vec<usize> = (0..n / w).map(|i| i * w).collect();
    if n % w != 0 {
        out.push(n - w);
    }
    Ok(out)
}

pub fn subarray_partition(tensor: &ChannelTensor, window_rx: usize, window_tx: usize) -> Result<Vec<SubArrayWindow>> {
    let rx = window_offsets(tensor.n_rx(), window_rx)?;
    let tx = window_offsets(tensor.n_tx(), window_tx)?;
    let mut out = Vec::with_capacity(rx.len() * tx.len());
    for &q0 in &rx {
        for &p0 in &tx {
            out.push(SubArrayWindow {
                rx_offset: q0,
                tx_offset: p0,
                tensor: tensor.sub_tensor(q0, window_rx, p0, window_tx)?,
            });
        }
    }
    Ok(out)
}

/// Local frame `(n, e1, e2)` in which a window's direction is parameterised.
#[derive(Debug, Clone, Copy)]
struct DirFrame {
    rank: usize,
    n: Vec3,
    e1: Vec3,
    e2: Vec3,
}

impl DirFrame {
    fn from_window(pos: &[Vec3], normals: &[Vec3]) -> Self {
        let c = pos.iter().fold(Vec3::zeros(), |a, p| a + p) / pos.len() as f64;
        let mut s = Matrix3::zeros();
        for p in pos {
            let d = p - c;
            s += d * d.transpose();
        }
        let eig = s.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lmax = eig.eigenvalues[order[0]];
        let rank = if lmax <= 0.0 {
            0
        } else {
            order.iter().filter(|&&i| eig.eigenvalues[i] > 1e-10 * lmax).count()
        };
        let mut facing = normals.iter().fold(Vec3::zeros(), |a, n| a + n);
        if facing.norm() < 1e-9 {
            facing = Vec3::x();
        }
        let facing = facing.normalize();
        let orthogonal = |v: Vec3, axis: &Vec3| {
            let r = v - axis * axis.dot(&v);
            if r.norm() > 1e-9 {
                Some(r.normalize())
            } else {
                None
            }
        };
        match rank {
            0 => DirFrame {
                rank,
                n: facing,
                e1: Vec3::y(),
                e2: Vec3::z(),
            },
            1 => {
                let mut e1: Vec3 = eig.eigenvectors.column(order[0]).into();
                let lead = if e1.y.abs() >= e1.z.abs() { e1.y } else { e1.z };
                if lead < 0.0 {
                    e1 = -e1;
                }
                let n = orthogonal(facing, &e1)
                    .or_else(|| orthogonal(Vec3::x(), &e1))
                    .unwrap_or_else(|| orthogonal(Vec3::z(), &e1).expect("some axis is not parallel"));
                DirFrame {
                    rank,
                    n,
                    e1,
                    e2: n.cross(&e1),
                }
            }
            2 => {
                let mut n: Vec3 = eig.eigenvectors.column(order[2]).into();
                let reference = if n.dot(&facing).abs() > 1e-9 { facing } else { Vec3::x() };
                if n.dot(&reference) < 0.0 {
                    n = -n;
                }
                let e2 = orthogonal(Vec3::z(), &n).unwrap_or_else(|| orthogonal(Vec3::y(), &n).expect("plane has a direction"));
                DirFrame {
                    rank,
                    n,
                    e1: e2.cross(&n),
                    e2,
                }
            }
            _ => DirFrame {
                rank: 3,
                n: Vec3::x(),
                e1: Vec3::y(),
                e2: Vec3::z(),
            },
        }
    }

    fn dir(&self, a: f64, b: f64) -> Vec3 {
        match self.rank {
            0 => self.n,
            1 => self.n * a.cos() + self.e1 * a.sin(),
            _ => self.n * (b.cos() * a.cos()) + self.e1 * (b.cos() * a.sin()) + self.e2 * b.sin(),
        }
    }

    #[cfg(test)]
    fn coords(&self, u: &Vec3) -> (f64, f64) {
        let x = u.dot(&self.n);
        let y = u.dot(&self.e1);
        let z = u.dot(&self.e2);
        match self.rank {
            0 => (0.0, 0.0),
            1 => (y.clamp(-1.0, 1.0).asin(), 0.0),
            _ => (y.atan2(x), z.clamp(-1.0, 1.0).asin()),
        }
    }

    fn a_range(&self) -> (f64, f64) {
        match self.rank {
            3 => (-PI, PI),
            _ => (-PI / 2.0, PI / 2.0),
        }
    }

    /// Basis of the resolvable subspace.
    fn basis(&self) -> Vec<Vec3> {
        match self.rank {
            0 => vec![],
            1 => vec![self.e1],
            2 => vec![self.e1, self.e2],
            _ => vec![self.n, self.e1, self.e2],
        }
    }

    fn grid(&self, step: f64) -> Vec<(f64, f64)> {
        let span = |lo: f64, hi: f64, closed: bool| -> Vec<f64> {
            let n = ((hi - lo) / step).ceil() as usize;
            let count = if closed { n + 1 } else { n };
            (0..count).map(|i| (lo + i as f64 * step).min(hi)).collect()
        };
        match self.rank {
            0 => vec![(0.0, 0.0)],
            1 => span(-PI / 2.0, PI / 2.0, true).into_iter().map(|a| (a, 0.0)).collect(),
            2 => {
                let axis = span(-PI / 2.0, PI / 2.0, true);
                axis.iter().flat_map(|&a| axis.iter().map(move |&b| (a, b))).collect()
            }
            _ => {
                let az = span(-PI, PI, false);
                let el = span(-PI / 2.0, PI / 2.0, true);
                az.iter().flat_map(|&a| el.iter().map(move |&b| (a, b))).collect()
            }
        }
    }
}

/// Maximise a unimodal `f` on `[lo, hi]`.
fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

const GOLDEN_ITERS: usize = 28;

#[derive(Debug, Clone, Copy)]
struct Path {
    tau: f64,
    rx: (f64, f64),
    tx: (f64, f64),
    alpha: Complex64,
}

/// One window's data and geometry.
struct Window {
    nf: usize,
    nq: usize,
    np: usize,
    f0: f64,
    df: f64,
    fc: f64,
    rx_pos: Vec<Vec3>,
    tx_pos: Vec<Vec3>,
    rx_frame: DirFrame,
    tx_frame: DirFrame,
    /// `[k][q][p]`, averaged over snapshots.
    x: Vec<Complex64>,
}

/// `exp(j f_k phi)` for `k = 0..nf`, by recurrence with periodic re-anchoring.
fn phasor_row(f0: f64, df: f64, nf: usize, phi: f64, out: &mut [Complex64]) {
    let step = Complex64::from_polar(1.0, df * phi);
    let mut v = Complex64::new(0.0, 0.0);
    for (k, o) in out.iter_mut().enumerate().take(nf) {
        if k % 128 == 0 {
            v = Complex64::from_polar(1.0, (f0 + k as f64 * df) * phi);
        }
        *o = v;
        v *= step;
    }
}

impl Window {
    fn new(tensor: &ChannelTensor, rx: &[Vec3], rx_normals: &[Vec3], tx: &[Vec3], tx_normals: &[Vec3]) -> Self {
        let (ns, nf, nq, np) = tensor.dims();
        let axis = tensor.freq_axis();
        let per = nf * nq * np;
        let mut x = vec![Complex64::new(0.0, 0.0); per];
        for j in 0..ns {
            let start = tensor.index(j, 0, 0, 0);
            for (a, b) in x.iter_mut().zip(&tensor.data()[start..start + per]) {
                *a += b / ns as f64;
            }
        }
        Self {
            nf,
            nq,
            np,
            f0: axis[0],
            df: if nf > 1 { axis[1] - axis[0] } else { 1.0 },
            fc: axis[nf / 2],
            rx_pos: rx.to_vec(),
            tx_pos: tx.to_vec(),
            rx_frame: DirFrame::from_window(rx, rx_normals),
            tx_frame: DirFrame::from_window(tx, tx_normals),
            x,
        }
    }

    fn idx(&self, k: usize, q: usize, p: usize) -> usize {
        (k * self.nq + q) * self.np + p
    }

    fn steering(&self, pos: &[Vec3], u: &Vec3) -> Vec<Complex64> {
        // [k][i]
        let n = pos.len();
        let mut out = vec![Complex64::new(0.0, 0.0); self.nf * n];
        let mut row = vec![Complex64::new(0.0, 0.0); self.nf];
        for (i, x) in pos.iter().enumerate() {
            let phi = 2.0 * PI * u.dot(x) / SPEED_OF_LIGHT;
            phasor_row(self.f0, self.df, self.nf, phi, &mut row);
            for k in 0..self.nf {
                out[k * n + i] = row[k];
            }
        }
        out
    }

    fn delay_row(&self, tau: f64) -> Vec<Complex64> {
        let mut row = vec![Complex64::new(0.0, 0.0); self.nf];
        phasor_row(self.f0, self.df, self.nf, -2.0 * PI * tau, &mut row);
        row
    }

    fn norm(&self) -> f64 {
        (self.nf * self.nq * self.np) as f64
    }

    fn contribution(&self, path: &Path) -> Vec<Complex64> {
        let ar = self.steering(&self.rx_pos, &self.rx_frame.dir(path.rx.0, path.rx.1));
        let at = self.steering(&self.tx_pos, &self.tx_frame.dir(path.tx.0, path.tx.1));
        let d = self.delay_row(path.tau);
        let mut out = vec![Complex64::new(0.0, 0.0); self.x.len()];
        for k in 0..self.nf {
            for q in 0..self.nq {
                let s = path.alpha * d[k] * ar[k * self.nq + q];
                let base = self.idx(k, q, 0);
                for p in 0..self.np {
                    out[base + p] = s * at[k * self.np + p];
                }
            }
        }
        out
    }

    /// `a(theta)^H y` for the full path model with unit amplitude.
    fn correlate(&self, y: &[Complex64], path: &Path) -> Complex64 {
        let z = self.delay_stat(y, path);
        let d = self.delay_row(path.tau);
        z.iter().zip(&d).map(|(a, b)| a * b.conj()).sum()
    }

    /// `z_k = sum_{q,p} conj(a_rx a_tx) y_k`.
    fn delay_stat(&self, y: &[Complex64], path: &Path) -> Vec<Complex64> {
        let ar = self.steering(&self.rx_pos, &self.rx_frame.dir(path.rx.0, path.rx.1));
        let at = self.steering(&self.tx_pos, &self.tx_frame.dir(path.tx.0, path.tx.1));
        (0..self.nf)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for q in 0..self.nq {
                    let base = self.idx(k, q, 0);
                    let mut inner = Complex64::new(0.0, 0.0);
                    for p in 0..self.np {
                        inner += at[k * self.np + p].conj() * y[base + p];
                    }
                    acc += ar[k * self.nq + q].conj() * inner;
                }
                acc
            })
            .collect()
    }

    /// Statistic over one array end, `[k][i]`, with the delay and the
    /// other end's steering removed.
    fn end_stat(&self, y: &[Complex64], path: &Path, rx_end: bool) -> Vec<Complex64> {
        let d = self.delay_row(path.tau);
        if rx_end {
            let at = self.steering(&self.tx_pos, &self.tx_frame.dir(path.tx.0, path.tx.1));
            let mut w = vec![Complex64::new(0.0, 0.0); self.nf * self.nq];
            for k in 0..self.nf {
                for q in 0..self.nq {
                    let base = self.idx(k, q, 0);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for p in 0..self.np {
                        acc += at[k * self.np + p].conj() * y[base + p];
                    }
                    w[k * self.nq + q] = acc * d[k].conj();
                }
            }
            w
        } else {
            let ar = self.steering(&self.rx_pos, &self.rx_frame.dir(path.rx.0, path.rx.1));
            let mut v = vec![Complex64::new(0.0, 0.0); self.nf * self.np];
            for k in 0..self.nf {
                for q in 0..self.nq {
                    let c = ar[k * self.nq + q].conj() * d[k].conj();
                    let base = self.idx(k, q, 0);
                    for p in 0..self.np {
                        v[k * self.np + p] += c * y[base + p];
                    }
                }
            }
            v
        }
    }

    /// `|sum_{k,i} conj(a_i(f_k; u)) w_ki|`.
    fn end_objective(&self, w: &[Complex64], pos: &[Vec3], u: &Vec3) -> f64 {
        let n = pos.len();
        let mut total = Complex64::new(0.0, 0.0);
        for (i, x) in pos.iter().enumerate() {
            let phi = -2.0 * PI * u.dot(x) / SPEED_OF_LIGHT;
            let step = Complex64::from_polar(1.0, self.df * phi);
            let mut v = Complex64::new(0.0, 0.0);
            for k in 0..self.nf {
                if k % 128 == 0 {
                    v = Complex64::from_polar(1.0, (self.f0 + k as f64 * self.df) * phi);
                }
                total += v * w[k * n + i];
                v *= step;
            }
        }
        total.norm()
    }

    fn delay_objective(&self, z: &[Complex64], tau: f64) -> f64 {
        // the absolute-frequency factor has unit modulus and drops out
        let step = Complex64::from_polar(1.0, 2.0 * PI * self.df * tau);
        let mut v = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, zk) in z.iter().enumerate() {
            if k % 128 == 0 {
                v = Complex64::from_polar(1.0, 2.0 * PI * self.df * tau * k as f64);
            }
            acc += zk * v;
            v *= step;
        }
        acc.norm()
    }

    fn window_s(&self) -> f64 {
        1.0 / self.df
    }

    /// One maximization sweep over the coordinates of `path` against `y`.
    fn refine(&self, y: &[Complex64], path: &mut Path, cfg: &SageConfig) {
        // delay
        let z = self.delay_stat(y, path);
        let cur = self.delay_objective(&z, path.tau);
        let lo = (path.tau - cfg.delay_grid_s).max(0.0);
        let hi = (path.tau + cfg.delay_grid_s).min(self.window_s());
        let (t, v) = golden_max(|t| self.delay_objective(&z, t), lo, hi, GOLDEN_ITERS);
        if v > cur {
            path.tau = t;
        }
        // arrival, then departure
        for rx_end in [true, false] {
            let frame = if rx_end { self.rx_frame } else { self.tx_frame };
            if frame.rank == 0 {
                continue;
            }
            let pos = if rx_end { &self.rx_pos } else { &self.tx_pos };
            let w = self.end_stat(y, path, rx_end);
            let (a_lo, a_hi) = frame.a_range();
            for _ in 0..2 {
                let (a0, b0) = if rx_end { path.rx } else { path.tx };
                let cur = self.end_objective(&w, pos, &frame.dir(a0, b0));
                let (lo, hi) = if frame.rank == 3 {
                    (a0 - cfg.angle_grid_rad, a0 + cfg.angle_grid_rad)
                } else {
                    ((a0 - cfg.angle_grid_rad).max(a_lo), (a0 + cfg.angle_grid_rad).min(a_hi))
                };
                let (a, v) = golden_max(|a| self.end_objective(&w, pos, &frame.dir(a, b0)), lo, hi, GOLDEN_ITERS);
                let a1 = if v > cur { a } else { a0 };
                let mut b1 = b0;
                if frame.rank >= 2 {
                    let cur = self.end_objective(&w, pos, &frame.dir(a1, b0));
                    let lo = (b0 - cfg.angle_grid_rad).max(-PI / 2.0);
                    let hi = (b0 + cfg.angle_grid_rad).min(PI / 2.0);
                    let (b, v) = golden_max(|b| self.end_objective(&w, pos, &frame.dir(a1, b)), lo, hi, GOLDEN_ITERS);
                    if v > cur {
                        b1 = b;
                    }
                }
                if rx_end {
                    path.rx = (a1, b1);
                } else {
                    path.tx = (a1, b1);
                }
            }
        }
        path.alpha = self.correlate(y, path) / self.norm();
    }

    /// Strongest path in `r` by delay-profile peak and narrowband angle grids.
    fn detect(&self, r: &[Complex64], cfg: &SageConfig) -> Path {
        let bin = self.window_s() / self.nf as f64;
        let factor = (bin / cfg.delay_grid_s).ceil().max(1.0) as usize;
        let m = self.nf * factor;
        let fft = FftPlanner::new().plan_fft_inverse(m);
        let mut profile = vec![0.0; m];
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for q in 0..self.nq {
            for p in 0..self.np {
                buf.fill(Complex64::new(0.0, 0.0));
                for k in 0..self.nf {
                    buf[k] = r[self.idx(k, q, p)];
                }
                fft.process(&mut buf);
                for (acc, v) in profile.iter_mut().zip(&buf) {
                    *acc += v.norm_sqr();
                }
            }
        }
        let mut best = 0;
        for (i, v) in profile.iter().enumerate() {
            if *v > profile[best] {
                best = i;
            }
        }
        let tau = best as f64 * self.window_s() / m as f64;

        // narrowband snapshot at the detected delay
        let d = self.delay_row(tau);
        let mut v = vec![Complex64::new(0.0, 0.0); self.nq * self.np];
        for k in 0..self.nf {
            let c = d[k].conj();
            for q in 0..self.nq {
                let base = self.idx(k, q, 0);
                for p in 0..self.np {
                    v[q * self.np + p] += c * r[base + p];
                }
            }
        }
        let kc = 2.0 * PI * self.fc / SPEED_OF_LIGHT;
        let mut rx = (0.0, 0.0);
        let mut beam = vec![Complex64::new(0.0, 0.0); self.np];
        if self.rx_frame.rank > 0 {
            let mut best_score = -1.0;
            let mut bp = vec![Complex64::new(0.0, 0.0); self.np];
            for (a, b) in self.rx_frame.grid(cfg.angle_grid_rad) {
                let u = self.rx_frame.dir(a, b);
                bp.fill(Complex64::new(0.0, 0.0));
                for (q, y) in self.rx_pos.iter().enumerate() {
                    let w = Complex64::from_polar(1.0, -kc * u.dot(y));
                    for p in 0..self.np {
                        bp[p] += w * v[q * self.np + p];
                    }
                }
                let score: f64 = bp.iter().map(|c| c.norm_sqr()).sum();
                if score > best_score {
                    best_score = score;
                    rx = (a, b);
                    beam.copy_from_slice(&bp);
                }
            }
        } else {
            for q in 0..self.nq {
                for p in 0..self.np {
                    beam[p] += v[q * self.np + p];
                }
            }
        }
        let mut tx = (0.0, 0.0);
        if self.tx_frame.rank > 0 {
            let mut best_score = -1.0;
            for (a, b) in self.tx_frame.grid(cfg.angle_grid_rad) {
                let u = self.tx_frame.dir(a, b);
                let s: Complex64 = self
                    .tx_pos
                    .iter()
                    .zip(&beam)
                    .map(|(x, t)| Complex64::from_polar(1.0, -kc * u.dot(x)) * t)
                    .sum();
                if s.norm_sqr() > best_score {
                    best_score = s.norm_sqr();
                    tx = (a, b);
                }
            }
        }
        let mut path = Path {
            tau,
            rx,
            tx,
            alpha: Complex64::new(0.0, 0.0),
        };
        path.alpha = self.correlate(r, &path) / self.norm();
        path
    }

    /// Noise power per delay tap, from the median tap power.
    fn estimate_noise_per_tap(&self) -> f64 {
        let fft = FftPlanner::new().plan_fft_inverse(self.nf);
        let mut taps = Vec::with_capacity(self.x.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nf];
        for q in 0..self.nq {
            for p in 0..self.np {
                for k in 0..self.nf {
                    buf[k] = self.x[self.idx(k, q, p)];
                }
                fft.process(&mut buf);
                taps.extend(buf.iter().map(|v| v.norm_sqr() / (self.nf * self.nf) as f64));
            }
        }
        median(&mut taps) / std::f64::consts::LN_2
    }
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

struct WindowOutcome {
    paths: Vec<Path>,
    history: Vec<f64>,
    input_energy: f64,
    sweeps: usize,
    converged: bool,
}

fn threshold(p_max: f64, noise_tap: f64, dr_db: f64) -> f64 {
    (p_max * 10f64.powf(-dr_db / 10.0)).max(noise_tap * 10f64.powf(0.3))
}

fn sweep(win: &Window, r: &mut [Complex64], paths: &mut [Path], cfg: &SageConfig) {
    for path in paths.iter_mut() {
        let old = win.contribution(path);
        let y: Vec<Complex64> = r.iter().zip(&old).map(|(a, b)| a + b).collect();
        win.refine(&y, path, cfg);
        let new = win.contribution(path);
        for ((ri, yi), ni) in r.iter_mut().zip(&y).zip(&new) {
            *ri = yi - ni;
        }
    }
}

fn estimate_window(win: &Window, cfg: &SageConfig, noise_tap: f64) -> WindowOutcome {
    let input_energy = energy(&win.x);
    let mut r = win.x.clone();
    let mut paths: Vec<Path> = Vec::new();
    let mut history = vec![input_energy];
    let mut sweeps = 0;
    if input_energy == 0.0 {
        return WindowOutcome {
            paths,
            history,
            input_energy,
            sweeps,
            converged: true,
        };
    }
    let rel_change = |h: &[f64]| {
        let n = h.len();
        if n < 2 || h[n - 2] == 0.0 {
            0.0
        } else {
            (h[n - 2] - h[n - 1]).abs() / h[n - 2]
        }
    };

    while paths.len() < cfg.max_paths {
        let mut cand = win.detect(&r, cfg);
        win.refine(&r, &mut cand, cfg);
        let p_new = cand.alpha.norm_sqr();
        let p_max = paths.iter().map(|p| p.alpha.norm_sqr()).fold(p_new, f64::max);
        if p_new < threshold(p_max, noise_tap, cfg.dynamic_range_db) {
            break;
        }
        let c = win.contribution(&cand);
        let before = energy(&r);
        let mut trial = r.clone();
        for (ri, ci) in trial.iter_mut().zip(&c) {
            *ri -= ci;
        }
        let after = energy(&trial);
        if after >= before {
            break;
        }
        r = trial;
        paths.push(cand);
        history.push(after);
        // a few joint sweeps while the model grows
        for _ in 0..2 {
            sweep(win, &mut r, &mut paths, cfg);
            sweeps += 1;
            history.push(energy(&r));
            if rel_change(&history) < cfg.conv_tol {
                break;
            }
        }
        if (before - energy(&r)) / before < cfg.conv_tol {
            break;
        }
    }

    let mut converged = paths.is_empty();
    for _ in 0..cfg.max_iter {
        if paths.is_empty() {
            break;
        }
        sweep(win, &mut r, &mut paths, cfg);
        sweeps += 1;
        history.push(energy(&r));
        if rel_change(&history) < cfg.conv_tol {
            converged = true;
            break;
        }
    }
    WindowOutcome {
        paths,
        history,
        input_energy,
        sweeps,
        converged,
    }
}

/// Estimate of one path in one window, in the array's local frame.
#[derive(Debug, Clone)]
struct WindowPath {
    tau: f64,
    alpha: Complex64,
    tx_basis: Vec<Vec3>,
    tx_proj: Vec<f64>,
    tx_facing: Vec3,
    rx_basis: Vec<Vec3>,
    rx_proj: Vec<f64>,
    rx_facing: Vec3,
}

impl WindowPath {
    fn new(win: &Window, p: &Path) -> Self {
        let ut = win.tx_frame.dir(p.tx.0, p.tx.1);
        let ur = win.rx_frame.dir(p.rx.0, p.rx.1);
        let tb = win.tx_frame.basis();
        let rb = win.rx_frame.basis();
        Self {
            tau: p.tau,
            alpha: p.alpha,
            tx_proj: tb.iter().map(|e| e.dot(&ut)).collect(),
            tx_basis: tb,
            tx_facing: win.tx_frame.n,
            rx_proj: rb.iter().map(|e| e.dot(&ur)).collect(),
            rx_basis: rb,
            rx_facing: win.rx_frame.n,
        }
    }
}

/// Unit direction best matching the stacked projection constraints,
/// completed towards `facing` where they leave it free.
fn solve_direction(basis: &[Vec3], proj: &[f64], facing: &Vec3) -> Vec3 {
    if basis.is_empty() {
        return *facing;
    }
    let a = DMatrix::from_fn(basis.len(), 3, |i, j| basis[i][j]);
    let b = DVector::from_column_slice(proj);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let u = svd.solve(&b, 1e-9 * smax).expect("SVD computed with U and V");
    let u_span = Vec3::new(u[0], u[1], u[2]);
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-9 * smax).count();
    if rank >= 3 || u_span.norm() >= 1.0 {
        return u_span.normalize();
    }
    // component of `facing` outside the constrained subspace
    let v_t = svd.v_t.expect("requested V^T");
    let mut free = *facing;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-9 * smax {
            let row = Vec3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)]);
            free -= row * row.dot(facing);
        }
    }
    if free.norm() < 1e-12 {
        return u_span.normalize();
    }
    u_span + free.normalize() * (1.0 - u_span.norm_squared()).sqrt()
}

struct Cluster {
    members: Vec<WindowPath>,
    tx_dir: Vec3,
    rx_dir: Vec3,
    tau: f64,
}

impl Cluster {
    fn update(&mut self) {
        let collect = |tx: bool| {
            let mut basis = Vec::new();
            let mut proj = Vec::new();
            for m in &self.members {
                let (b, p) = if tx { (&m.tx_basis, &m.tx_proj) } else { (&m.rx_basis, &m.rx_proj) };
                basis.extend_from_slice(b);
                proj.extend_from_slice(p);
            }
            (basis, proj)
        };
        let (tb, tp) = collect(true);
        let (rb, rp) = collect(false);
        self.tx_dir = solve_direction(&tb, &tp, &self.members[0].tx_facing);
        self.rx_dir = solve_direction(&rb, &rp, &self.members[0].rx_facing);
        let w: f64 = self.members.iter().map(|m| m.alpha.norm_sqr()).sum();
        self.tau = self.members.iter().map(|m| m.tau * m.alpha.norm_sqr()).sum::<f64>() / w;
    }

    fn accepts(&self, m: &WindowPath, cfg: &SageConfig) -> bool {
        if (m.tau - self.tau).abs() > cfg.merge_delay_gate_s {
            return false;
        }
        let gate = cfg.merge_angle_gate_rad.sin();
        let close = |basis: &[Vec3], proj: &[f64], dir: &Vec3| {
            basis.iter().zip(proj).all(|(e, s)| (e.dot(dir) - s).abs() <= gate)
        };
        close(&m.tx_basis, &m.tx_proj, &self.tx_dir) && close(&m.rx_basis, &m.rx_proj, &self.rx_dir)
    }

    fn to_mpc(&self) -> Result<Mpc> {
        let power = self.members.iter().map(|m| m.alpha.norm_sqr()).sum::<f64>() / self.members.len() as f64;
        let phase = self.members[0].alpha.arg();
        let (aaod, eaod) = angles_of(&self.tx_dir);
        let (aaoa, eaoa) = angles_of(&self.rx_dir);
        Mpc::new(
            Complex64::from_polar(power.sqrt(), phase),
            self.tau.max(0.0),
            wrap_angle(aaod),
            wrap_angle(aaoa),
            eaod.clamp(-PI / 2.0, PI / 2.0),
            eaoa.clamp(-PI / 2.0, PI / 2.0),
        )
    }
}

/// Estimate multipath components of `tensor` measured between `tx` and
/// `rx`. Angles are reported in each array's local frame.
pub fn sage_estimate(tensor: &ChannelTensor, tx: &ArrayGeometry, rx: &ArrayGeometry, config: &SageConfig) -> Result<SageResult> {
    config.validate()?;
    let (_, n_f, n_rx, n_tx) = tensor.dims();
    ensure(n_rx == rx.len() && n_tx == tx.len(), || {
        Error::Dimension(format!(
            "tensor is {n_rx}x{n_tx} but geometries have {}x{} elements",
            rx.len(),
            tx.len()
        ))
    })?;
    ensure(config.window_rx <= n_rx && config.window_tx <= n_tx, || {
        Error::Config(format!(
            "window {}x{} exceeds {n_rx}x{n_tx} array",
            config.window_rx, config.window_tx
        ))
    })?;
    ensure(n_f >= 2, || Error::InsufficientData { needed: 2, got: n_f })?;

    let parts = subarray_partition(tensor, config.window_rx, config.window_tx)?;
    let windows: Vec<Window> = parts
        .iter()
        .map(|w| {
            let rs = w.rx_offset..w.rx_offset + config.window_rx;
            let ts = w.tx_offset..w.tx_offset + config.window_tx;
            Window::new(
                &w.tensor,
                &rx.elements[rs.clone()],
                &rx.normals[rs],
                &tx.elements[ts.clone()],
                &tx.normals[ts],
            )
        })
        .collect();

    let total_energy: f64 = windows.iter().map(|w| energy(&w.x)).sum();
    if total_energy == 0.0 {
        return Ok(SageResult {
            mpcs: Vec::new(),
            residual_power_db: f64::NEG_INFINITY,
            iterations: 0,
            converged: true,
            residual_history: vec![vec![0.0]; windows.len()],
            noise_per_tap: 0.0,
        });
    }

    let n_s = tensor.n_snapshots() as f64;
    let noise_tap = match config.noise_variance {
        Some(v) => v / (n_f as f64 * n_s),
        None => {
            let mut est: Vec<f64> = windows.iter().map(Window::estimate_noise_per_tap).collect();
            median(&mut est)
        }
    };

    let mut outcomes = Vec::with_capacity(windows.len());
    for w in &windows {
        outcomes.push(estimate_window(w, config, noise_tap));
    }

    let mut all: Vec<WindowPath> = windows
        .iter()
        .zip(&outcomes)
        .flat_map(|(w, o)| o.paths.iter().map(move |p| WindowPath::new(w, p)))
        .collect();
    all.sort_by(|a, b| b.alpha.norm_sqr().total_cmp(&a.alpha.norm_sqr()).then(a.tau.total_cmp(&b.tau)));

    let mut clusters: Vec<Cluster> = Vec::new();
    for m in all {
        match clusters.iter_mut().find(|c| c.accepts(&m, config)) {
            Some(c) => {
                c.members.push(m);
                c.update();
            }
            None => {
                let mut c = Cluster {
                    members: vec![m],
                    tx_dir: Vec3::x(),
                    rx_dir: Vec3::x(),
                    tau: 0.0,
                };
                c.update();
                clusters.push(c);
            }
        }
    }

    let mut mpcs = clusters.iter().map(Cluster::to_mpc).collect::<Result<Vec<_>>>()?;
    if let Some(p_max) = mpcs.iter().map(Mpc::power).reduce(f64::max) {
        let t = threshold(p_max, noise_tap, config.dynamic_range_db);
        mpcs.retain(|m| m.power() >= t);
    }
    sort_by_power(&mut mpcs);

    let residual: f64 = outcomes.iter().map(|o| *o.history.last().unwrap()).sum();
    let input: f64 = outcomes.iter().map(|o| o.input_energy).sum();
    Ok(SageResult {
        mpcs,
        residual_power_db: 10.0 * (residual / input).log10(),
        iterations: outcomes.iter().map(|o| o.sweeps).sum(),
        converged: outcomes.iter().all(|o| o.converged),
        residual_history: outcomes.into_iter().map(|o| o.history).collect(),
        noise_per_tap: noise_tap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_channel, ScenarioClass, ScenarioConfig, Wavefront};
    use approx::assert_abs_diff_eq;

    #[test]
    fn window_tiling() {
        assert_eq!(window_offsets(64, 16).unwrap(), vec![0, 16, 32, 48]);
        assert_eq!(window_offsets(128, 32).unwrap(), vec![0, 32, 64, 96]);
        let w = window_offsets(100, 16).unwrap();
        assert_eq!(w.len(), 7);
        assert_eq!(*w.last().unwrap(), 84);
        let mut covered = [false; 100];
        for o in &w {
            for c in covered.iter_mut().skip(*o).take(16) {
                *c = true;
            }
        }
        assert!(covered.iter().all(|c| *c));
        assert!(matches!(window_offsets(8, 16), Err(Error::Config(_))));
    }

    #[test]
    fn frame_for_planar_window_is_local_frame() {
        let g = ArrayGeometry::planar(4, 4, 0.01).unwrap();
        let f = DirFrame::from_window(&g.elements, &g.normals);
        assert_eq!(f.rank, 2);
        assert_abs_diff_eq!((f.n - Vec3::x()).norm(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!((f.e1 - Vec3::y()).norm(), 0.0, epsilon = 1e-9);
        let u = crate::geometry::direction(0.3, -0.2);
        let (a, b) = f.coords(&u);
        assert_abs_diff_eq!((f.dir(a, b) - u).norm(), 0.0, epsilon = 1e-12);
        let line = ArrayGeometry::ula(8, 0.01).unwrap();
        assert_eq!(DirFrame::from_window(&line.elements, &line.normals).rank, 1);
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, _) = golden_max(|x| -(x - 0.3).powi(2), -1.0, 1.0, 60);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-9);
    }

    #[test]
    fn single_planar_path_noiseless() {
        let tx = ArrayGeometry::planar(4, 4, 0.01).unwrap();
        let rx = ArrayGeometry::planar(2, 4, 0.01).unwrap();
        let mut cfg = ScenarioConfig::link(ScenarioClass::FfLos, tx, rx, 100.0, 0.0, 0.0).unwrap();
        cfg.num_freq = 64;
        cfg.bandwidth_hz = 100e6;
        let truth = Mpc::new(Complex64::from_polar(1e-3, 0.7), 123.4e-9, 0.25, -0.4, -0.1, 0.15).unwrap();
        let h = synth_channel(&cfg, &[truth], Wavefront::Planar).unwrap();
        let sc = SageConfig {
            window_rx: 8,
            window_tx: 16,
            max_paths: 3,
            ..SageConfig::default()
        };
        let r = sage_estimate(&h, &cfg.tx_geometry, &cfg.rx_geometry, &sc).unwrap();
        assert!(!r.mpcs.is_empty());
        let m = r.mpcs[0];
        assert!((m.delay - truth.delay).abs() < sc.delay_grid_s);
        for (a, b) in [(m.aaod, truth.aaod), (m.aaoa, truth.aaoa), (m.eaod, truth.eaod), (m.eaoa, truth.eaoa)] {
            assert!((a - b).abs() < sc.angle_grid_rad, "{a} vs {b}");
        }
        assert!((m.power_db() - truth.power_db()).abs() < 0.1);
        for h in &r.residual_history {
            for w in h.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn zero_tensor_gives_empty_result() {
        let g = ArrayGeometry::ula(4, 0.01).unwrap();
        let t = ChannelTensor::zeros(1, 4, 4, crate::FrequencyGrid::band(15e9, 1e8, 8).frequencies()).unwrap();
        let r = sage_estimate(&t, &g, &g, &SageConfig { window_rx: 4, window_tx: 4, ..SageConfig::default() }).unwrap();
        assert!(r.mpcs.is_empty());
        assert!(r.converged);
        let big = SageConfig { window_rx: 8, window_tx: 4, ..SageConfig::default() };
        assert!(matches!(sage_estimate(&t, &g, &g, &big), Err(Error::Config(_))));
    }
}

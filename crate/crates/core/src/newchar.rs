//! Near-field aperture trends, spatial cross-correlation and channel
//! hardening.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::{median, polyfit, std_pop};
use crate::tensor::ChannelTensor;

/// One-dimensional phase unwrapping: adjacent differences are folded into
/// `[-pi, pi)`.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            let folded = (d + PI).rem_euclid(2.0 * PI) - PI;
            offset += folded - d;
        }
        out.push(p + offset);
    }
    out
}

/// Per-element power and phase of the direct path across an aperture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AperturePathTrace {
    pub element_index: Vec<usize>,
    pub power_db: Vec<f64>,
    /// Unwrapped, radians.
    pub phase_rad: Vec<f64>,
}

impl AperturePathTrace {
    pub fn new(element_index: Vec<usize>, power_db: Vec<f64>, phase_rad: Vec<f64>) -> Result<Self> {
        let n = element_index.len();
        ensure(power_db.len() == n && phase_rad.len() == n, || {
            Error::Dimension("trace sequences differ in length".into())
        })?;
        ensure(n >= 3, || Error::InsufficientData { needed: 3, got: n })?;
        ensure(phase_rad.windows(2).all(|w| (w[1] - w[0]).abs() < PI), || {
            Error::InvalidArgument("phase sequence is not unwrapped".into())
        })?;
        Ok(Self {
            element_index,
            power_db,
            phase_rad,
        })
    }

    /// Trace from complex per-element gains in element order, unwrapping
    /// the phase.
    pub fn from_gains(gains: &[Complex64]) -> Result<Self> {
        let phase: Vec<f64> = gains.iter().map(|g| g.arg()).collect();
        Self::new(
            (0..gains.len()).collect(),
            gains.iter().map(|g| 10.0 * g.norm_sqr().log10()).collect(),
            unwrap(&phase),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureTrends {
    pub power_std_db: f64,
    pub power_linfit_rmse_db: f64,
    pub phase_linfit_rmse_rad: f64,
    pub phase_quadfit_rmse_rad: f64,
}

/// Linear and quadratic least-squares fits versus element index.
pub fn fit_aperture_trends(trace: &AperturePathTrace) -> Result<ApertureTrends> {
    let n = trace.element_index.len();
    ensure(n >= 3, || Error::InsufficientData { needed: 3, got: n })?;
    let x: Vec<f64> = trace.element_index.iter().map(|&i| i as f64).collect();
    let (_, p_lin) = polyfit(&x, &trace.power_db, 1)?;
    let (_, ph_lin) = polyfit(&x, &trace.phase_rad, 1)?;
    let (_, ph_quad) = polyfit(&x, &trace.phase_rad, 2)?;
    Ok(ApertureTrends {
        power_std_db: std_pop(&trace.power_db),
        power_linfit_rmse_db: p_lin,
        phase_linfit_rmse_rad: ph_lin,
        phase_quadfit_rmse_rad: ph_quad,
    })
}

/// `|<a, b>| / (||a|| ||b||)`.
pub fn sccf(h_a: &[Complex64], h_b: &[Complex64]) -> Result<f64> {
    ensure(h_a.len() == h_b.len() && !h_a.is_empty(), || {
        Error::Dimension("vectors must be non-empty and of equal length".into())
    })?;
    let na: f64 = h_a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = h_b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    ensure(na > 0.0 && nb > 0.0, || Error::UndefinedCorrelation("zero vector".into()))?;
    let ip: Complex64 = h_a.iter().zip(h_b).map(|(a, b)| a.conj() * b).sum();
    Ok((ip.norm() / (na * nb)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CscfPairing {
    /// Every unordered receive pair `q != q'`.
    #[default]
    AllRxPairs,
    /// Neighbouring receive elements `(q, q + 1)`.
    AdjacentRx,
}

/// Cumulative spatial cross-correlation: the mean SCCF over the selected
/// receive pairs, all transmit elements and all snapshots, with each
/// branch taken as its response over the frequency axis.
pub fn cscf(tensor: &ChannelTensor, pairing: CscfPairing) -> Result<f64> {
    let (n_s, _, n_rx, n_tx) = tensor.dims();
    ensure(n_rx >= 2, || Error::InsufficientData { needed: 2, got: n_rx })?;
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..n_s {
        for p in 0..n_tx {
            let branches: Vec<Vec<Complex64>> = (0..n_rx).map(|q| tensor.branch(j, q, p)).collect();
            for (q, b) in branches.iter().enumerate() {
                ensure(b.iter().any(|v| v.norm_sqr() > 0.0), || {
                    Error::UndefinedCorrelation(format!("all-zero branch at snapshot {j}, rx {q}, tx {p}"))
                })?;
            }
            match pairing {
                CscfPairing::AllRxPairs => {
                    for a in 0..n_rx {
                        for b in a + 1..n_rx {
                            total += sccf(&branches[a], &branches[b])?;
                            count += 1;
                        }
                    }
                }
                CscfPairing::AdjacentRx => {
                    for a in 0..n_rx - 1 {
                        total += sccf(&branches[a], &branches[a + 1])?;
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(total / count as f64)
}

/// Per-point data needed for the hardening metric: the energy
/// normalization `alpha_m` and the transmit-summed power of each receive
/// element at each frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointGains {
    /// Mean over snapshots and frequencies of `||H(j,k)||_F^2`.
    pub alpha: f64,
    /// `[k][q]`: `mean_j sum_p |H(j,k,q,p)|^2`.
    pub rx_power: Vec<Vec<f64>>,
}

impl PointGains {
    pub fn from_tensor(tensor: &ChannelTensor) -> Result<Self> {
        let (n_s, n_f, n_rx, n_tx) = tensor.dims();
        let mut rx_power = vec![vec![0.0; n_rx]; n_f];
        for j in 0..n_s {
            for (k, row) in rx_power.iter_mut().enumerate() {
                let s = tensor.slice(j, k);
                for (q, r) in row.iter_mut().enumerate() {
                    *r += s[q * n_tx..(q + 1) * n_tx].iter().map(|v| v.norm_sqr()).sum::<f64>() / n_s as f64;
                }
            }
        }
        let alpha = rx_power.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / n_f as f64;
        ensure(alpha > 0.0 && alpha.is_finite(), || {
            Error::Normalization("zero-energy measurement point".into())
        })?;
        Ok(Self { alpha, rx_power })
    }
}

/// Channel tensors of `M` measurement points, reduced on insertion to the
/// per-point gains the hardening metric depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardeningEnsemble {
    pub points: Vec<PointGains>,
    pub rx_subset_sizes: Vec<usize>,
    /// `(N_f, N_Rx, N_Tx)` shared by every point.
    pub dims: Option<(usize, usize, usize)>,
}

impl HardeningEnsemble {
    pub fn new(rx_subset_sizes: Vec<usize>) -> Self {
        Self {
            points: Vec::new(),
            rx_subset_sizes,
            dims: None,
        }
    }

    pub fn from_tensors(tensors: &[ChannelTensor], rx_subset_sizes: Vec<usize>) -> Result<Self> {
        let mut e = Self::new(rx_subset_sizes);
        for t in tensors {
            e.push(t)?;
        }
        Ok(e)
    }

    pub fn push(&mut self, tensor: &ChannelTensor) -> Result<()> {
        let (_, n_f, n_rx, n_tx) = tensor.dims();
        match self.dims {
            None => self.dims = Some((n_f, n_rx, n_tx)),
            Some(d) => ensure(d == (n_f, n_rx, n_tx), || {
                Error::Dimension(format!("point dims {:?} differ from {d:?}", (n_f, n_rx, n_tx)))
            })?,
        }
        self.points.push(PointGains::from_tensor(tensor)?);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Receive elements used for a hardening evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RxSelection {
    #[default]
    First,
    Random { seed: u64 },
}

/// Channel hardening with the first `n_rx` receive elements.
pub fn chd(ensemble: &HardeningEnsemble, n_rx: usize) -> Result<f64> {
    chd_with(ensemble, n_rx, RxSelection::First)
}

/// `median_f Var_m[g_m(f)] / E_m[g_m(f)]^2` with
/// `g_m(f) = sum_{q in subset} sum_p |H_m(f)|^2 / alpha_m`.
pub fn chd_with(ensemble: &HardeningEnsemble, n_rx: usize, selection: RxSelection) -> Result<f64> {
    let m = ensemble.len();
    ensure(m >= 2, || Error::InsufficientData { needed: 2, got: m })?;
    let (n_f, total_rx, _) = ensemble.dims.expect("non-empty ensemble has dims");
    ensure(n_rx >= 1 && n_rx <= total_rx, || {
        Error::InvalidArgument(format!("n_rx {n_rx} outside 1..={total_rx}"))
    })?;
    let subset: Vec<usize> = match selection {
        RxSelection::First => (0..n_rx).collect(),
        RxSelection::Random { seed } => {
            let mut idx: Vec<usize> = (0..total_rx).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(n_rx);
            idx
        }
    };
    let mut per_freq = Vec::with_capacity(n_f);
    for k in 0..n_f {
        let g: Vec<f64> = ensemble
            .points
            .iter()
            .map(|pt| subset.iter().map(|&q| pt.rx_power[k][q]).sum::<f64>() / pt.alpha)
            .collect();
        let mean = g.iter().sum::<f64>() / m as f64;
        let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        ensure(mean > 0.0, || Error::Normalization(format!("zero mean gain at bin {k}")))?;
        per_freq.push(var / (mean * mean));
    }
    Ok(median(&mut per_freq))
}

/// `(n_rx, chd)` for every configured subset size.
pub fn chd_curve(ensemble: &HardeningEnsemble) -> Result<Vec<(usize, f64)>> {
    ensemble
        .rx_subset_sizes
        .iter()
        .map(|&n| Ok((n, chd(ensemble, n)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FrequencyGrid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unwrap_removes_jumps() {
        let truth: Vec<f64> = (0..50).map(|i| 0.4 * i as f64).collect();
        let wrapped: Vec<f64> = truth.iter().map(|p| crate::geometry::wrap_angle(*p)).collect();
        let u = unwrap(&wrapped);
        for (a, b) in u.iter().zip(&truth) {
            assert_abs_diff_eq!(a - u[0], b - truth[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_phase_has_zero_linear_residual() {
        let t = AperturePathTrace::new((0..10).collect(), vec![-3.0; 10], (0..10).map(|i| 0.3 * i as f64).collect()).unwrap();
        let r = fit_aperture_trends(&t).unwrap();
        assert!(r.phase_linfit_rmse_rad < 1e-12);
        assert_eq!(r.power_std_db, 0.0);
        assert!(AperturePathTrace::new(vec![0, 1], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(AperturePathTrace::new(vec![0, 1, 2], vec![0.0; 3], vec![0.0, 4.0, 0.0]).is_err());
    }

    #[test]
    fn sccf_basics() {
        let a = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)];
        assert_abs_diff_eq!(sccf(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        let b = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let c = [Complex64::new(0.0, 0.0), Complex64::new(3.0, 1.0)];
        assert_eq!(sccf(&b, &c).unwrap(), 0.0);
        let s = Complex64::new(-2.0, 0.7);
        let scaled: Vec<Complex64> = a.iter().map(|v| v * s).collect();
        assert_abs_diff_eq!(sccf(&scaled, &b).unwrap(), sccf(&a, &b).unwrap(), epsilon = 1e-15);
        assert!(matches!(sccf(&a, &[Complex64::new(0.0, 0.0); 2]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn cscf_rank_one_is_one() {
        let axis = FrequencyGrid::band(15e9, 100e6, 8).frequencies();
        let mut t = ChannelTensor::zeros(1, 3, 2, axis).unwrap();
        for k in 0..8 {
            for q in 0..3 {
                for p in 0..2 {
                    let v = Complex64::from_polar(1.0 + q as f64, 0.3 * k as f64 + q as f64 - p as f64);
                    t.set(0, k, q, p, v);
                }
            }
        }
        assert_abs_diff_eq!(cscf(&t, CscfPairing::AllRxPairs).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cscf(&t, CscfPairing::AdjacentRx).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn chd_identical_points_and_scale() {
        let t = crate::synth::iid_rayleigh(4, 4, 1, 6, 1).unwrap();
        let e = HardeningEnsemble::from_tensors(&[t.clone(), t.clone(), t.clone()], vec![1, 4]).unwrap();
        assert_abs_diff_eq!(chd(&e, 4).unwrap(), 0.0, epsilon = 1e-20);
        let others: Vec<ChannelTensor> = (0..5).map(|s| crate::synth::iid_rayleigh(4, 4, 1, 6, 10 + s).unwrap()).collect();
        let base = chd(&HardeningEnsemble::from_tensors(&others, vec![2]).unwrap(), 2).unwrap();
        let mut scaled = others.clone();
        scaled[2].scale(Complex64::new(0.0, 17.0));
        let after = chd(&HardeningEnsemble::from_tensors(&scaled, vec![2]).unwrap(), 2).unwrap();
        assert_abs_diff_eq!(base, after, epsilon = 1e-12 * base);
        assert!(chd(&e, 5).is_err());
    }
}

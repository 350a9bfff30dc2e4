//! MIMO capacity with Frobenius normalization, empirical CDFs and
//! normal / two-component Gaussian mixture fits.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::{ln_det_hpd, median};
use crate::tensor::ChannelTensor;

/// How the per-sample matrices are scaled before evaluating capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Each `H(j,k)` divided by `sqrt(||H(j,k)||_F^2 / (N_Rx N_Tx))`.
    #[default]
    PerMatrix,
    /// One scale for the whole tensor, from the mean Frobenius power over
    /// all `(j,k)`. Keeps the gain fluctuation between samples.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySamples {
    /// bit/s/Hz, ordered `[j][k]`.
    pub values: Vec<f64>,
    pub snr_db: f64,
    /// `(N_Rx, N_Tx)`.
    pub dims: (usize, usize),
    pub normalization: Normalization,
}

impl CapacitySamples {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation (`n - 1` denominator).
    pub fn std(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

/// `log2 det(I + s H H^H)`, evaluated on the smaller Gram matrix.
pub fn log2_det_capacity(h: &DMatrix<Complex64>, scale: f64) -> Result<f64> {
    let (r, c) = h.shape();
    let gram = if r <= c { h * h.adjoint() } else { h.adjoint() * h };
    let n = gram.nrows();
    let m = DMatrix::<Complex64>::identity(n, n) + gram * Complex64::new(scale, 0.0);
    Ok(ln_det_hpd(m)? / std::f64::consts::LN_2)
}

/// Capacity `log2 det(I + rho / N_Tx * H^ H^^H)` of every `(j, k)` matrix
/// with per-matrix Frobenius normalization.
pub fn capacity(tensor: &ChannelTensor, snr_db: f64) -> Result<CapacitySamples> {
    capacity_with(tensor, snr_db, Normalization::PerMatrix)
}

pub fn capacity_with(tensor: &ChannelTensor, snr_db: f64, normalization: Normalization) -> Result<CapacitySamples> {
    let (n_s, n_f, n_rx, n_tx) = tensor.dims();
    let rho = 10f64.powf(snr_db / 10.0);
    let pairs = (n_rx * n_tx) as f64;
    let power = |j: usize, k: usize| tensor.slice(j, k).iter().map(|v| v.norm_sqr()).sum::<f64>() / pairs;
    let mut per = Vec::with_capacity(n_s * n_f);
    for j in 0..n_s {
        for k in 0..n_f {
            let p = power(j, k);
            ensure(p > 0.0 && p.is_finite(), || {
                Error::Normalization(format!("zero-energy matrix at snapshot {j}, frequency bin {k}"))
            })?;
            per.push(p);
        }
    }
    let ensemble = per.iter().sum::<f64>() / per.len() as f64;
    let mut values = Vec::with_capacity(per.len());
    for j in 0..n_s {
        for k in 0..n_f {
            let p_rs = match normalization {
                Normalization::PerMatrix => per[j * n_f + k],
                Normalization::Ensemble => ensemble,
            };
            let c = log2_det_capacity(&tensor.matrix(j, k), rho / (n_tx as f64 * p_rs))?;
            values.push(c.max(0.0));
        }
    }
    Ok(CapacitySamples {
        values,
        snr_db,
        dims: (n_rx, n_tx),
        normalization,
    })
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        ensure(!samples.is_empty(), || Error::InsufficientData { needed: 1, got: 0 })?;
        ensure(samples.iter().all(|v| !v.is_nan()), || Error::InvalidArgument("NaN sample".into()))?;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// `(value, k / N)` for each sorted sample.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(|(i, v)| (*v, (i + 1) as f64 / n)).collect()
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    Ok(EmpiricalCdf::new(samples)?.points())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DistKind {
    Normal,
    Gmm2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DistParams {
    Normal { mu: f64, sigma: f64 },
    Gmm2 { w1: f64, mu1: f64, sigma1: f64, w2: f64, mu2: f64, sigma2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistFit {
    pub kind: DistKind,
    pub params: DistParams,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n: usize,
    /// Zero variance (normal) or a component pinned at the variance floor (mixture).
    pub degenerate: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after every EM iteration of the returned run.
    pub ll_history: Vec<f64>,
}

impl DistFit {
    /// A distribution with known parameters and no data attached.
    pub fn from_params(params: DistParams) -> Self {
        let kind = match params {
            DistParams::Normal { .. } => DistKind::Normal,
            DistParams::Gmm2 { .. } => DistKind::Gmm2,
        };
        Self {
            kind,
            params,
            log_likelihood: f64::NAN,
            bic: f64::NAN,
            n: 0,
            degenerate: false,
            converged: true,
            iterations: 0,
            ll_history: Vec::new(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.params {
            DistParams::Normal { mu, .. } => mu,
            DistParams::Gmm2 { w1, mu1, w2, mu2, .. } => w1 * mu1 + w2 * mu2,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.params {
            DistParams::Normal { mu, sigma } => normal_pdf(x, mu, sigma),
            DistParams::Gmm2 { w1, mu1, sigma1, w2, mu2, sigma2 } => {
                w1 * normal_pdf(x, mu1, sigma1) + w2 * normal_pdf(x, mu2, sigma2)
            }
        }
    }

    fn n_params(&self) -> f64 {
        match self.kind {
            DistKind::Normal => 2.0,
            DistKind::Gmm2 => 5.0,
        }
    }
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

fn ln_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

fn bic(ll: f64, k: f64, n: usize) -> f64 {
    k * (n as f64).ln() - 2.0 * ll
}

/// Maximum-likelihood normal fit.
pub fn fit_normal(samples: &[f64]) -> Result<DistFit> {
    ensure(samples.len() >= 2, || Error::InsufficientData {
        needed: 2,
        got: samples.len(),
    })?;
    let n = samples.len();
    let mu = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    let sigma = var.sqrt();
    let degenerate = !(sigma > 0.0);
    let ll = if degenerate {
        f64::INFINITY
    } else {
        samples.iter().map(|&x| ln_normal_pdf(x, mu, sigma)).sum()
    };
    let mut fit = DistFit::from_params(DistParams::Normal { mu, sigma });
    fit.log_likelihood = ll;
    fit.bic = bic(ll, fit.n_params(), n);
    fit.n = n;
    fit.degenerate = degenerate;
    Ok(fit)
}

struct EmRun {
    w: [f64; 2],
    mu: [f64; 2],
    sigma: [f64; 2],
    history: Vec<f64>,
    converged: bool,
    collapsed: bool,
}

fn em_run(x: &[f64], init: ([f64; 2], [f64; 2], [f64; 2]), floor: f64, max_iter: usize, tol: f64) -> EmRun {
    let n = x.len();
    let (mut w, mut mu, mut sigma) = init;
    let mut resp = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut collapsed = false;
    for _ in 0..max_iter {
        // E-step with log-sum-exp; `resp` holds the weight of component 0
        let mut ll = 0.0;
        for (r, &xi) in resp.iter_mut().zip(x) {
            let a = w[0].ln() + ln_normal_pdf(xi, mu[0], sigma[0]);
            let b = w[1].ln() + ln_normal_pdf(xi, mu[1], sigma[1]);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            ll += lse;
            *r = (a - lse).exp();
        }
        // the likelihood of the parameters entering this iteration
        let prev = history.last().copied();
        history.push(ll);
        if let Some(p) = prev {
            if (ll - p).abs() <= tol * ll.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        // M-step
        let n0: f64 = resp.iter().sum();
        let n1 = n as f64 - n0;
        if n0 < 1e-12 || n1 < 1e-12 {
            collapsed = true;
            break;
        }
        w = [n0 / n as f64, n1 / n as f64];
        mu = [
            resp.iter().zip(x).map(|(r, xi)| r * xi).sum::<f64>() / n0,
            resp.iter().zip(x).map(|(r, xi)| (1.0 - r) * xi).sum::<f64>() / n1,
        ];
        let v0 = resp.iter().zip(x).map(|(r, xi)| r * (xi - mu[0]).powi(2)).sum::<f64>() / n0;
        let v1 = resp.iter().zip(x).map(|(r, xi)| (1.0 - r) * (xi - mu[1]).powi(2)).sum::<f64>() / n1;
        sigma = [v0.sqrt().max(floor), v1.sqrt().max(floor)];
        if sigma[0] <= floor || sigma[1] <= floor {
            collapsed = true;
        }
    }
    EmRun {
        w,
        mu,
        sigma,
        history,
        converged,
        collapsed,
    }
}

/// Two-component 1-D Gaussian mixture by expectation-maximization.
///
/// Initialised from the split at the sample median. A component whose
/// deviation reaches the floor `1e-6 * range` triggers a restart from a
/// jittered split, at most five times; if every run collapses the best
/// one is returned with `degenerate` set.
pub fn fit_gmm2(samples: &[f64], max_iter: usize, tol: f64, seed: u64) -> Result<DistFit> {
    ensure(samples.len() >= 4, || Error::InsufficientData {
        needed: 4,
        got: samples.len(),
    })?;
    ensure(samples.iter().all(|v| v.is_finite()), || Error::InvalidArgument("non-finite sample".into()))?;
    let n = samples.len();
    let mut sorted = samples.to_vec();
    let med = median(&mut sorted);
    let range = sorted[n - 1] - sorted[0];
    ensure(range > 0.0, || Error::InvalidArgument("all samples identical".into()))?;
    let floor = 1e-6 * range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let init_at = |split: f64| {
        let (lo, hi): (Vec<f64>, Vec<f64>) = samples.iter().partition(|&&v| v <= split);
        let (lo, hi) = if lo.is_empty() || hi.is_empty() {
            (sorted[..n / 2].to_vec(), sorted[n / 2..].to_vec())
        } else {
            (lo, hi)
        };
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
            (m, s.max(floor * 10.0).max(1e-3 * range))
        };
        let (m0, s0) = stats(&lo);
        let (m1, s1) = stats(&hi);
        let w0 = lo.len() as f64 / n as f64;
        ([w0, 1.0 - w0], [m0, m1], [s0, s1])
    };

    let mut best: Option<EmRun> = None;
    for attempt in 0..=5 {
        let split = if attempt == 0 {
            med
        } else {
            let q: f64 = rng.gen_range(0.25..0.75);
            sorted[((n - 1) as f64 * q) as usize] + rng.gen_range(-0.05..0.05) * range
        };
        let run = em_run(samples, init_at(split), floor, max_iter, tol);
        let better = best
            .as_ref()
            .map_or(true, |b| run.history.last().unwrap_or(&f64::NEG_INFINITY) > b.history.last().unwrap_or(&f64::NEG_INFINITY));
        let collapsed = run.collapsed;
        if better {
            best = Some(run);
        }
        if !collapsed {
            break;
        }
    }
    let run = best.expect("at least one EM run");
    let (a, b) = if run.mu[0] <= run.mu[1] { (0, 1) } else { (1, 0) };
    let ll = *run.history.last().unwrap_or(&f64::NEG_INFINITY);
    let params = DistParams::Gmm2 {
        w1: run.w[a],
        mu1: run.mu[a],
        sigma1: run.sigma[a],
        w2: run.w[b],
        mu2: run.mu[b],
        sigma2: run.sigma[b],
    };
    let mut fit = DistFit::from_params(params);
    fit.log_likelihood = ll;
    fit.bic = bic(ll, fit.n_params(), n);
    fit.n = n;
    fit.degenerate = run.collapsed;
    fit.converged = run.converged;
    fit.iterations = run.history.len();
    fit.ll_history = run.history;
    Ok(fit)
}

/// The fit with the lower BIC.
pub fn select_by_bic<'a>(a: &'a DistFit, b: &'a DistFit) -> &'a DistFit {
    if b.bic < a.bic {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FrequencyGrid;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn tensor_from(rows: usize, cols: usize, v: &[Complex64]) -> ChannelTensor {
        ChannelTensor::from_data(1, rows, cols, FrequencyGrid::band(15e9, 1e6, 1).frequencies(), v.to_vec()).unwrap()
    }

    #[test]
    fn siso_and_identity() {
        let t = tensor_from(1, 1, &[Complex64::new(0.3, -2.0)]);
        assert_abs_diff_eq!(capacity(&t, 10.0).unwrap().values[0], 11f64.log2(), epsilon = 1e-12);
        let n = 4;
        let mut v = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            v[i * n + i] = Complex64::new(7.0, 0.0);
        }
        let c = capacity(&tensor_from(n, n, &v), 10.0).unwrap().values[0];
        assert_abs_diff_eq!(c, n as f64 * 11f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn rank_one_closed_form() {
        let a = [Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.1), Complex64::new(0.7, -0.9)];
        let b = [Complex64::new(0.3, 0.0), Complex64::new(0.0, 1.1)];
        let v: Vec<Complex64> = a.iter().flat_map(|x| b.iter().map(move |y| x * y.conj())).collect();
        let c = capacity(&tensor_from(3, 2, &v), 13.0).unwrap().values[0];
        let rho = 10f64.powf(1.3);
        assert_abs_diff_eq!(c, (1.0 + rho * 3.0).log2(), epsilon = 1e-9);
    }

    #[test]
    fn zero_matrix_rejected() {
        let t = tensor_from(2, 2, &[Complex64::new(0.0, 0.0); 4]);
        assert!(matches!(capacity(&t, 10.0), Err(Error::Normalization(_))));
    }

    #[test]
    fn cdf_steps() {
        let c = EmpiricalCdf::new(&[3.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(c.eval(2.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(c.eval(3.0), 1.0);
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(empirical_cdf(&[5.0]).unwrap(), vec![(5.0, 1.0)]);
    }

    #[test]
    fn normal_fit_and_affine_closure() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let f = fit_normal(&x).unwrap();
        let y: Vec<f64> = x.iter().map(|v| -3.0 * v + 2.0).collect();
        let g = fit_normal(&y).unwrap();
        match (f.params, g.params) {
            (DistParams::Normal { mu, sigma }, DistParams::Normal { mu: m2, sigma: s2 }) => {
                assert_abs_diff_eq!(m2, -3.0 * mu + 2.0, epsilon = 1e-12);
                assert_abs_diff_eq!(s2, 3.0 * sigma, epsilon = 1e-12);
            }
            _ => unreachable!(),
        }
        let c = fit_normal(&[4.2; 6]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.mean(), 4.2);
    }

    #[test]
    fn mixture_mean_identity() {
        let f = DistFit::from_params(DistParams::Gmm2 { w1: 0.367, mu1: 145.0, sigma1: 9.8, w2: 0.633, mu2: 124.0, sigma2: 3.56 });
        assert_abs_diff_eq!(f.mean(), 131.707, epsilon = 1e-9);
    }

    #[test]
    fn gmm_point_masses() {
        let mut x = vec![10.0; 30];
        x.extend(vec![50.0; 70]);
        let f = fit_gmm2(&x, 200, 1e-8, 1).unwrap();
        let DistParams::Gmm2 { w1, mu1, sigma1, w2, mu2, sigma2 } = f.params else { unreachable!() };
        assert_abs_diff_eq!(w1, 0.3, epsilon = 1e-9);
        assert_abs_diff_eq!(w2, 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(mu1, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(mu2, 50.0, epsilon = 1e-9);
        assert!(sigma1 <= 40e-6 + 1e-15 && sigma2 <= 40e-6 + 1e-15);
        assert!(f.degenerate);
    }

    #[test]
    fn gmm_likelihood_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Normal::new(0.0, 1.0).unwrap();
        let b = Normal::new(3.0, 0.5).unwrap();
        let x: Vec<f64> = (0..2000).map(|i| if i % 3 == 0 { b.sample(&mut rng) } else { a.sample(&mut rng) }).collect();
        let f = fit_gmm2(&x, 500, 1e-10, 0).unwrap();
        for w in f.ll_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        let DistParams::Gmm2 { mu1, mu2, .. } = f.params else { unreachable!() };
        assert!(mu1 < mu2);
        let nf = fit_normal(&x).unwrap();
        assert_eq!(select_by_bic(&nf, &f).kind, DistKind::Gmm2);
    }
}

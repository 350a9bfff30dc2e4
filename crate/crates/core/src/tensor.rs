//! The channel tensor `H[j][k][q][p]`: snapshot, frequency, receive
//! element, transmit element.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Uniform frequency grid `f_k = center + (k - floor(n/2)) * spacing`.
///
/// For odd `n` the grid is symmetric about `center`, which is the layout
/// the sounder produces from a length-`n` DFT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub center_hz: f64,
    pub spacing_hz: f64,
    pub n: usize,
}

impl FrequencyGrid {
    /// `n` bins covering `bandwidth_hz` around `carrier_hz`.
    pub fn band(carrier_hz: f64, bandwidth_hz: f64, n: usize) -> Self {
        Self {
            center_hz: carrier_hz,
            spacing_hz: bandwidth_hz / n as f64,
            n,
        }
    }

    pub fn offset_index(&self, k: usize) -> i64 {
        k as i64 - (self.n / 2) as i64
    }

    pub fn freq(&self, k: usize) -> f64 {
        self.center_hz + self.offset_index(k) as f64 * self.spacing_hz
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.freq(k)).collect()
    }

    /// Unambiguous delay range `1 / spacing`.
    pub fn delay_window_s(&self) -> f64 {
        1.0 / self.spacing_hz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    n_s: usize,
    n_f: usize,
    n_rx: usize,
    n_tx: usize,
    data: Vec<Complex64>,
    freq_axis: Vec<f64>,
    snapshot_axis: Vec<f64>,
}

impl ChannelTensor {
    pub fn zeros(n_s: usize, n_rx: usize, n_tx: usize, freq_axis: Vec<f64>) -> Result<Self> {
        let n_f = freq_axis.len();
        let data = vec![Complex64::new(0.0, 0.0); n_s * n_f * n_rx * n_tx];
        Self::from_data(n_s, n_rx, n_tx, freq_axis, data)
    }

    /// Wrap row-major `[j][k][q][p]` samples. Snapshots are indexed by
    /// their ordinal (seconds = `j`) until [`Self::with_snapshot_axis`].
    pub fn from_data(
        n_s: usize,
        n_rx: usize,
        n_tx: usize,
        freq_axis: Vec<f64>,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        let n_f = freq_axis.len();
        ensure(n_s >= 1 && n_f >= 1 && n_rx >= 1 && n_tx >= 1, || {
            Error::Dimension(format!("all dimensions must be >= 1, got [{n_s}, {n_f}, {n_rx}, {n_tx}]"))
        })?;
        ensure(data.len() == n_s * n_f * n_rx * n_tx, || {
            Error::Dimension(format!(
                "{} samples do not fill [{n_s}, {n_f}, {n_rx}, {n_tx}]",
                data.len()
            ))
        })?;
        check_uniform_axis(&freq_axis)?;
        Ok(Self {
            n_s,
            n_f,
            n_rx,
            n_tx,
            data,
            freq_axis,
            snapshot_axis: (0..n_s).map(|j| j as f64).collect(),
        })
    }

    pub fn with_snapshot_axis(mut self, axis: Vec<f64>) -> Result<Self> {
        ensure(axis.len() == self.n_s, || {
            Error::Dimension(format!("{} snapshot times for {} snapshots", axis.len(), self.n_s))
        })?;
        self.snapshot_axis = axis;
        Ok(self)
    }

    /// `(N_s, N_f, N_Rx, N_Tx)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n_s, self.n_f, self.n_rx, self.n_tx)
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_s
    }
    pub fn n_freq(&self) -> usize {
        self.n_f
    }
    pub fn n_rx(&self) -> usize {
        self.n_rx
    }
    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn freq_axis(&self) -> &[f64] {
        &self.freq_axis
    }

    pub fn snapshot_axis(&self) -> &[f64] {
        &self.snapshot_axis
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize, q: usize, p: usize) -> usize {
        ((j * self.n_f + k) * self.n_rx + q) * self.n_tx + p
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, q: usize, p: usize) -> Complex64 {
        self.data[self.index(j, k, q, p)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, q: usize, p: usize, v: Complex64) {
        let i = self.index(j, k, q, p);
        self.data[i] = v;
    }

    /// The `N_Rx x N_Tx` slice at `(j, k)`, row-major.
    pub fn slice(&self, j: usize, k: usize) -> &[Complex64] {
        let start = self.index(j, k, 0, 0);
        &self.data[start..start + self.n_rx * self.n_tx]
    }

    pub fn matrix(&self, j: usize, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.n_rx, self.n_tx, self.slice(j, k))
    }

    /// Frequency response of one antenna pair at snapshot `j`.
    pub fn branch(&self, j: usize, q: usize, p: usize) -> Vec<Complex64> {
        (0..self.n_f).map(|k| self.get(j, k, q, p)).collect()
    }

    /// Total `sum |H|^2` over every sample.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Element-wise sum with a tensor of identical shape.
    pub fn add_assign(&mut self, other: &ChannelTensor) -> Result<()> {
        ensure(self.dims() == other.dims(), || {
            Error::Dimension(format!("{:?} vs {:?}", self.dims(), other.dims()))
        })?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Keep receive elements `[q0, q0 + nq)` and transmit elements `[p0, p0 + np)`.
    pub fn sub_tensor(&self, q0: usize, nq: usize, p0: usize, np: usize) -> Result<Self> {
        ensure(q0 + nq <= self.n_rx && p0 + np <= self.n_tx && nq > 0 && np > 0, || {
            Error::Config(format!(
                "window rx[{q0}..{}] tx[{p0}..{}] exceeds {}x{} array",
                q0 + nq,
                p0 + np,
                self.n_rx,
                self.n_tx
            ))
        })?;
        let mut data = Vec::with_capacity(self.n_s * self.n_f * nq * np);
        for j in 0..self.n_s {
            for k in 0..self.n_f {
                for q in q0..q0 + nq {
                    let start = self.index(j, k, q, p0);
                    data.extend_from_slice(&self.data[start..start + np]);
                }
            }
        }
        let mut out = Self::from_data(self.n_s, nq, np, self.freq_axis.clone(), data)?;
        out.snapshot_axis = self.snapshot_axis.clone();
        Ok(out)
    }

    /// Reorder receive and transmit elements; `rx_perm[i]` is the old
    /// index of new receive element `i`.
    pub fn permuted(&self, rx_perm: &[usize], tx_perm: &[usize]) -> Self {
        let mut out = self.clone();
        for j in 0..self.n_s {
            for k in 0..self.n_f {
                for (q, &oq) in rx_perm.iter().enumerate() {
                    for (p, &op) in tx_perm.iter().enumerate() {
                        out.set(j, k, q, p, self.get(j, k, oq, op));
                    }
                }
            }
        }
        out
    }
}

fn check_uniform_axis(axis: &[f64]) -> Result<()> {
    ensure(axis.iter().all(|f| f.is_finite()), || {
        Error::InvalidArgument("frequency axis must be finite".into())
    })?;
    if axis.len() < 2 {
        return Ok(());
    }
    let step = axis[1] - axis[0];
    ensure(step > 0.0, || {
        Error::InvalidArgument("frequency axis must be strictly increasing".into())
    })?;
    let tol = 1e-6 * step;
    for (i, w) in axis.windows(2).enumerate() {
        ensure((w[1] - w[0] - step).abs() <= tol, || {
            Error::InvalidArgument(format!("frequency axis not uniform at bin {}", i + 1))
        })?;
    }
    Ok(())
}

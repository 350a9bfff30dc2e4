//! PN-correlation sounder emulation and over-the-air calibration.
//!
//! A sounding transmits a periodic m-sequence with rectangular chips,
//! sampled `oversample` times per chip. The channel is applied as a cyclic
//! convolution, so one PN period of received samples carries the full
//! steady-state response. Calibration divides the measured spectrum by a
//! chamber reference measured through the same front end and multiplies
//! in the known chamber response.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tensor::{ChannelTensor, FrequencyGrid};
use crate::SPEED_OF_LIGHT;

/// Feedback polynomial `x^10 + x^3 + 1`, including the `x^m` and `1` terms.
pub const DEFAULT_PN_POLYNOMIAL: u32 = 0x409;
pub const DEFAULT_PN_WIDTH: u32 = 10;
pub const DEFAULT_OVERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnSequence {
    /// Chips mapped `1 -> +1`, `0 -> -1`.
    pub chips: Vec<f64>,
    pub register_width: u32,
    pub polynomial: u32,
    pub init_state: u32,
}

impl PnSequence {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Periodic autocorrelation at `lag` chips.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        let n = self.chips.len();
        (0..n).map(|i| self.chips[i] * self.chips[(i + lag) % n]).sum()
    }

    /// Default 1023-chip sequence.
    pub fn default_1023() -> Self {
        gen_pn(DEFAULT_PN_WIDTH, DEFAULT_PN_POLYNOMIAL, 1).expect("default polynomial is primitive")
    }
}

/// Maximal-length sequence from a Fibonacci LFSR.
///
/// `polynomial` is a bit mask of `p(x)` with bit `i` the coefficient of
/// `x^i`; bits `m` and `0` must be set. The register holds
/// `a_n .. a_{n+m-1}` in bits `0 .. m-1` and advances by
/// `a_{n+m} = sum_{i<m} c_i a_{n+i}` (mod 2).
pub fn gen_pn(register_width: u32, polynomial: u32, init_state: u32) -> Result<PnSequence> {
    let m = register_width;
    ensure((2..=31).contains(&m), || {
        Error::Config(format!("register width {m} outside 2..=31"))
    })?;
    let full = 1u32 << m;
    ensure(polynomial & full != 0 && polynomial & 1 != 0 && polynomial >> (m + 1) == 0, || {
        Error::Config(format!(
            "polynomial {polynomial:#x} must have degree {m} and a constant term"
        ))
    })?;
    let mask = full - 1;
    ensure(init_state & mask != 0 && init_state >> m == 0, || {
        Error::Config(format!("initial state {init_state:#x} must be nonzero and fit in {m} bits"))
    })?;
    let taps = polynomial & mask;
    let period = (full - 1) as usize;
    let mut state = init_state;
    let mut chips = Vec::with_capacity(period);
    for step in 0..period {
        if step > 0 && state == init_state {
            return Err(Error::Config(format!(
                "polynomial {polynomial:#x} is not primitive: period {step} < {period}"
            )));
        }
        chips.push(if state & 1 == 1 { 1.0 } else { -1.0 });
        let fb = (state & taps).count_ones() & 1;
        state = (state >> 1) | (fb << (m - 1));
    }
    ensure(state == init_state, || {
        Error::Config(format!("polynomial {polynomial:#x} is not primitive"))
    })?;
    Ok(PnSequence {
        chips,
        register_width: m,
        polynomial,
        init_state,
    })
}

/// Complex baseband response of one front-end block.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum FrontEndResponse {
    #[default]
    Flat,
    /// Sinusoidal gain ripple of `peak_to_peak_db` across frequency with
    /// period `period_hz`, plus a pure group delay.
    Ripple {
        peak_to_peak_db: f64,
        period_hz: f64,
        phase_rad: f64,
        group_delay_s: f64,
    },
}

impl FrontEndResponse {
    /// Response at baseband frequency `f_bb` (Hz offset from the carrier).
    pub fn eval(&self, f_bb: f64) -> Complex64 {
        match *self {
            FrontEndResponse::Flat => Complex64::new(1.0, 0.0),
            FrontEndResponse::Ripple {
                peak_to_peak_db,
                period_hz,
                phase_rad,
                group_delay_s,
            } => {
                let db = 0.5 * peak_to_peak_db * (2.0 * PI * f_bb / period_hz + phase_rad).sin();
                Complex64::from_polar(10f64.powf(db / 20.0), -2.0 * PI * f_bb * group_delay_s)
            }
        }
    }
}

/// Lumped transmit power and gains of the sounder chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEndGains {
    pub tx_power_dbm: f64,
    pub pa_db: f64,
    pub lna_db: f64,
    pub ant_tx_dbi: f64,
    pub ant_rx_dbi: f64,
}

impl Default for FrontEndGains {
    fn default() -> Self {
        Self {
            tx_power_dbm: -15.0,
            pa_db: 30.0,
            lna_db: 35.0,
            ant_tx_dbi: 5.0,
            ant_rx_dbi: 5.0,
        }
    }
}

impl FrontEndGains {
    /// Unit transmit power and no gain.
    pub fn unity() -> Self {
        Self {
            tx_power_dbm: 0.0,
            pa_db: 0.0,
            lna_db: 0.0,
            ant_tx_dbi: 0.0,
            ant_rx_dbi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SounderResponse {
    pub g_sys: FrontEndResponse,
    pub g_tx: FrontEndResponse,
    pub g_rx: FrontEndResponse,
    pub gains: FrontEndGains,
    pub cable_loss_db: f64,
    /// RF switch isolation; recorded, not simulated.
    pub switch_isolation_db: f64,
}

impl Default for SounderResponse {
    fn default() -> Self {
        Self {
            g_sys: FrontEndResponse::Flat,
            g_tx: FrontEndResponse::Flat,
            g_rx: FrontEndResponse::Flat,
            gains: FrontEndGains::default(),
            cable_loss_db: 0.0,
            switch_isolation_db: 40.0,
        }
    }
}

impl SounderResponse {
    /// Flat responses, unit power, no gain.
    pub fn ideal() -> Self {
        Self {
            gains: FrontEndGains::unity(),
            ..Self::default()
        }
    }

    /// Voltage gain from the source amplitude `sqrt(mW)` through all
    /// lumped gains and the cable loss.
    pub fn scalar_gain(&self) -> f64 {
        let g = &self.gains;
        let db = g.tx_power_dbm + g.pa_db + g.lna_db + g.ant_tx_dbi + g.ant_rx_dbi - self.cable_loss_db;
        10f64.powf(db / 20.0)
    }

    /// Combined frequency response `g_sys g_tx g_rx` times the scalar gain.
    pub fn eval(&self, f_bb: f64) -> Complex64 {
        self.g_sys.eval(f_bb) * self.g_tx.eval(f_bb) * self.g_rx.eval(f_bb) * self.scalar_gain()
    }

    pub fn validate(&self, bandwidth_hz: f64) -> Result<()> {
        for i in 0..=64 {
            let f = (i as f64 / 64.0 - 0.5) * bandwidth_hz;
            let v = self.eval(f);
            ensure(v.re.is_finite() && v.im.is_finite() && v.norm() > 0.0, || {
                Error::InvalidArgument(format!("front-end response not finite and nonzero at {f} Hz"))
            })?;
        }
        Ok(())
    }
}

/// Channel impulse response on the chip-spaced delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    n_rx: usize,
    n_tx: usize,
    n_taps: usize,
    /// `[q][p][b]`
    taps: Vec<Complex64>,
    pub bin_width_s: f64,
    pub carrier_hz: f64,
}

impl Cir {
    pub fn zeros(n_rx: usize, n_tx: usize, n_taps: usize, bin_width_s: f64, carrier_hz: f64) -> Result<Self> {
        Self::from_taps(
            n_rx,
            n_tx,
            n_taps,
            vec![Complex64::new(0.0, 0.0); n_rx * n_tx * n_taps],
            bin_width_s,
            carrier_hz,
        )
    }

    pub fn from_taps(
        n_rx: usize,
        n_tx: usize,
        n_taps: usize,
        taps: Vec<Complex64>,
        bin_width_s: f64,
        carrier_hz: f64,
    ) -> Result<Self> {
        ensure(n_rx >= 1 && n_tx >= 1 && n_taps >= 1, || {
            Error::Dimension("CIR dimensions must be >= 1".into())
        })?;
        ensure(taps.len() == n_rx * n_tx * n_taps, || {
            Error::Dimension(format!("{} taps for {n_rx}x{n_tx}x{n_taps}", taps.len()))
        })?;
        ensure(bin_width_s > 0.0 && bin_width_s.is_finite(), || {
            Error::InvalidArgument("bin width must be positive".into())
        })?;
        Ok(Self {
            n_rx,
            n_tx,
            n_taps,
            taps,
            bin_width_s,
            carrier_hz,
        })
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }
    pub fn n_tx(&self) -> usize {
        self.n_tx
    }
    pub fn n_taps(&self) -> usize {
        self.n_taps
    }
    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn pair(&self, q: usize, p: usize) -> &[Complex64] {
        let s = (q * self.n_tx + p) * self.n_taps;
        &self.taps[s..s + self.n_taps]
    }

    pub fn pair_mut(&mut self, q: usize, p: usize) -> &mut [Complex64] {
        let s = (q * self.n_tx + p) * self.n_taps;
        &mut self.taps[s..s + self.n_taps]
    }

    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / self.bin_width_s
    }

    /// Delay-domain view of snapshot `j` via an `N_f`-point inverse DFT
    /// over the frequency axis. Tap `b` sits at delay `b / B`.
    pub fn from_tensor(tensor: &ChannelTensor, j: usize) -> Result<Self> {
        let (n_s, n_f, n_rx, n_tx) = tensor.dims();
        ensure(j < n_s, || Error::InvalidArgument(format!("snapshot {j} of {n_s}")))?;
        ensure(n_f >= 2, || Error::InsufficientData { needed: 2, got: n_f })?;
        let axis = tensor.freq_axis();
        let spacing = axis[1] - axis[0];
        let center = axis[n_f / 2];
        let ifft = FftPlanner::new().plan_fft_inverse(n_f);
        let mut taps = Vec::with_capacity(n_rx * n_tx * n_f);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_f];
        let half = n_f / 2;
        for q in 0..n_rx {
            for p in 0..n_tx {
                for k in 0..n_f {
                    buf[(k + n_f - half) % n_f] = tensor.get(j, k, q, p);
                }
                ifft.process(&mut buf);
                taps.extend(buf.iter().map(|v| v / n_f as f64));
            }
        }
        Self::from_taps(n_rx, n_tx, n_f, taps, 1.0 / (spacing * n_f as f64), center)
    }

    /// Frequency response on the grid `FrequencyGrid::band(carrier, B, n_taps)`.
    pub fn to_tensor(&self) -> Result<ChannelTensor> {
        let n = self.n_taps;
        let grid = FrequencyGrid::band(self.carrier_hz, self.bandwidth_hz(), n);
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut data = vec![Complex64::new(0.0, 0.0); n * self.n_rx * self.n_tx];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let half = n / 2;
        for q in 0..self.n_rx {
            for p in 0..self.n_tx {
                buf.copy_from_slice(self.pair(q, p));
                fft.process(&mut buf);
                for k in 0..n {
                    data[(k * self.n_rx + q) * self.n_tx + p] = buf[(k + n - half) % n];
                }
            }
        }
        ChannelTensor::from_data(1, self.n_rx, self.n_tx, grid.frequencies(), data)
    }

    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Received samples, one PN period per antenna pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    n_rx: usize,
    n_tx: usize,
    pub oversample: usize,
    pub n_chips: usize,
    pub chip_rate_hz: f64,
    /// `[q][p][n]`
    data: Vec<Complex64>,
}

impl Waveform {
    pub fn from_samples(
        n_rx: usize,
        n_tx: usize,
        oversample: usize,
        n_chips: usize,
        chip_rate_hz: f64,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        ensure(oversample >= 1 && n_chips >= 1 && n_rx >= 1 && n_tx >= 1, || {
            Error::Dimension("waveform dimensions must be >= 1".into())
        })?;
        ensure(data.len() == n_rx * n_tx * n_chips * oversample, || {
            Error::Dimension(format!("{} samples for {n_rx}x{n_tx}x{}", data.len(), n_chips * oversample))
        })?;
        Ok(Self {
            n_rx,
            n_tx,
            oversample,
            n_chips,
            chip_rate_hz,
            data,
        })
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }
    pub fn n_tx(&self) -> usize {
        self.n_tx
    }
    pub fn samples_per_pair(&self) -> usize {
        self.n_chips * self.oversample
    }
    pub fn sample_rate_hz(&self) -> f64 {
        self.chip_rate_hz * self.oversample as f64
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn pair(&self, q: usize, p: usize) -> &[Complex64] {
        let l = self.samples_per_pair();
        let s = (q * self.n_tx + p) * l;
        &self.data[s..s + l]
    }

    /// Mean `|y|^2` over all samples.
    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

/// Baseband frequency of FFT bin `i` of an `l`-point transform at rate `fs`.
fn fft_bin_freq(i: usize, l: usize, fs: f64) -> f64 {
    let signed = if i < l.div_ceil(2) { i as f64 } else { i as f64 - l as f64 };
    signed * fs / l as f64
}

fn pn_samples(pn: &PnSequence, oversample: usize) -> Vec<Complex64> {
    pn.chips
        .iter()
        .flat_map(|&c| std::iter::repeat(Complex64::new(c, 0.0)).take(oversample))
        .collect()
}

/// Emulate one sounding of every (rx, tx) pair: PN waveform through the
/// front end and the channel `cir_true`, plus complex white noise with
/// per-sample power `noise_floor_dbm` (pass `f64::NEG_INFINITY` for none).
/// Sample amplitudes are in `sqrt(mW)`.
pub fn sound_link(
    cir_true: &Cir,
    pn: &PnSequence,
    response: &SounderResponse,
    noise_floor_dbm: f64,
    oversample: usize,
    seed: u64,
) -> Result<Waveform> {
    ensure(oversample >= 1, || Error::InvalidArgument("oversample must be >= 1".into()))?;
    let n = pn.len();
    ensure(cir_true.n_taps() <= n, || {
        Error::InvalidArgument(format!(
            "CIR has {} taps, more than one PN period of {n} chips",
            cir_true.n_taps()
        ))
    })?;
    let chip_rate = cir_true.bandwidth_hz();
    response.validate(chip_rate)?;
    let l = n * oversample;
    let fs = chip_rate * oversample as f64;
    let mut planner = FftPlanner::new();
    let fft_l = planner.plan_fft_forward(l);
    let ifft_l = planner.plan_fft_inverse(l);
    let fft_n = planner.plan_fft_forward(n);

    let mut x = pn_samples(pn, oversample);
    fft_l.process(&mut x);
    let front: Vec<Complex64> = (0..l)
        .map(|i| x[i] * response.eval(fft_bin_freq(i, l, fs)) / l as f64)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = if noise_floor_dbm.is_finite() {
        (10f64.powf(noise_floor_dbm / 10.0) / 2.0).sqrt()
    } else {
        0.0
    };

    let mut data = Vec::with_capacity(cir_true.n_rx() * cir_true.n_tx() * l);
    let mut hbuf = vec![Complex64::new(0.0, 0.0); n];
    let mut ybuf = vec![Complex64::new(0.0, 0.0); l];
    for q in 0..cir_true.n_rx() {
        for p in 0..cir_true.n_tx() {
            hbuf.fill(Complex64::new(0.0, 0.0));
            hbuf[..cir_true.n_taps()].copy_from_slice(cir_true.pair(q, p));
            fft_n.process(&mut hbuf);
            for i in 0..l {
                ybuf[i] = front[i] * hbuf[i % n];
            }
            ifft_l.process(&mut ybuf);
            for v in &ybuf {
                let noise = if sigma > 0.0 {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * sigma
                } else {
                    Complex64::new(0.0, 0.0)
                };
                data.push(v + noise);
            }
        }
    }
    Waveform::from_samples(cir_true.n_rx(), cir_true.n_tx(), oversample, n, chip_rate, data)
}

/// Free-space response of the chamber link at absolute frequency `freq_hz`:
/// `c / (4 pi d f) * exp(-j 2 pi f d / c)`.
pub fn chamber_response(d_ane: f64, freq_hz: f64) -> Complex64 {
    Complex64::from_polar(
        SPEED_OF_LIGHT / (4.0 * PI * d_ane * freq_hz),
        -2.0 * PI * freq_hz * d_ane / SPEED_OF_LIGHT,
    )
}

/// Band-limited CIR of the chamber link, suitable for producing a
/// reference waveform with [`sound_link`].
pub fn chamber_cir(d_ane: f64, carrier_hz: f64, bandwidth_hz: f64, n_taps: usize) -> Result<Cir> {
    ensure(d_ane > 0.0, || Error::InvalidArgument("chamber distance must be positive".into()))?;
    let grid = FrequencyGrid::band(carrier_hz, bandwidth_hz, n_taps);
    let data = grid.frequencies().iter().map(|&f| chamber_response(d_ane, f)).collect();
    let t = ChannelTensor::from_data(1, 1, 1, grid.frequencies(), data)?;
    Cir::from_tensor(&t, 0)
}

/// Recover the channel CIR from a measurement and a chamber reference
/// taken through the same front end.
///
/// `y_cal` may hold a single pair, used for every measured pair, or one
/// reference per pair. Only the `n_chips` in-band bins are used.
pub fn ota_calibrate(y_meas: &Waveform, y_cal: &Waveform, d_ane: f64, carrier_hz: f64) -> Result<Cir> {
    ensure(d_ane > 0.0 && d_ane.is_finite(), || {
        Error::InvalidArgument("chamber distance must be positive".into())
    })?;
    ensure(
        y_meas.oversample == y_cal.oversample
            && y_meas.n_chips == y_cal.n_chips
            && y_meas.chip_rate_hz == y_cal.chip_rate_hz,
        || Error::InvalidArgument("measurement and reference differ in length or rate".into()),
    )?;
    let shared = y_cal.n_rx() == 1 && y_cal.n_tx() == 1;
    ensure(shared || (y_cal.n_rx() == y_meas.n_rx() && y_cal.n_tx() == y_meas.n_tx()), || {
        Error::Dimension("reference must be 1x1 or match the measurement".into())
    })?;
    let n = y_meas.n_chips;
    let l = y_meas.samples_per_pair();
    let spacing = y_meas.chip_rate_hz / n as f64;
    let half = n / 2;
    let mut planner = FftPlanner::new();
    let fft_l = planner.plan_fft_forward(l);
    let ifft_n = planner.plan_fft_inverse(n);
    // in-band bin k <-> signed offset k - half <-> FFT index mod l
    let bins: Vec<usize> = (0..n).map(|k| (k as i64 - half as i64).rem_euclid(l as i64) as usize).collect();
    let h_ane: Vec<Complex64> = (0..n)
        .map(|k| chamber_response(d_ane, carrier_hz + (k as f64 - half as f64) * spacing))
        .collect();

    let spectrum = |w: &[Complex64], fft: &Arc<dyn Fft<f64>>| {
        let mut b = w.to_vec();
        fft.process(&mut b);
        b
    };
    let ref_factor = |yc: &[Complex64]| -> Result<Vec<Complex64>> {
        let inband: Vec<Complex64> = bins.iter().map(|&i| yc[i]).collect();
        let peak = inband.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut out = Vec::with_capacity(n);
        for (k, v) in inband.iter().enumerate() {
            let mag = v.norm();
            if !(mag > 1e-12 * peak) {
                return Err(Error::IllConditionedCalibration { bin: k });
            }
            out.push(h_ane[k] / v);
        }
        Ok(out)
    };

    let shared_factor = if shared {
        Some(ref_factor(&spectrum(y_cal.pair(0, 0), &fft_l))?)
    } else {
        None
    };
    let mut taps = Vec::with_capacity(y_meas.n_rx() * y_meas.n_tx() * n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for q in 0..y_meas.n_rx() {
        for p in 0..y_meas.n_tx() {
            let own;
            let factor = match &shared_factor {
                Some(f) => f,
                None => {
                    own = ref_factor(&spectrum(y_cal.pair(q, p), &fft_l))?;
                    &own
                }
            };
            let y = spectrum(y_meas.pair(q, p), &fft_l);
            for k in 0..n {
                buf[(k + n - half) % n] = y[bins[k]] * factor[k];
            }
            ifft_n.process(&mut buf);
            taps.extend(buf.iter().map(|v| v / n as f64));
        }
    }
    Cir::from_taps(y_meas.n_rx(), y_meas.n_tx(), n, taps, 1.0 / y_meas.chip_rate_hz, carrier_hz)
}

/// Raw matched-filter correlation of each pair with the PN sequence,
/// normalised so a unit tap yields a unit peak. No calibration applied.
pub fn pn_correlate(y: &Waveform, pn: &PnSequence) -> Result<Cir> {
    ensure(pn.len() == y.n_chips, || {
        Error::Dimension(format!("PN length {} vs {} chips", pn.len(), y.n_chips))
    })?;
    let n = y.n_chips;
    let os = y.oversample;
    let l = y.samples_per_pair();
    let x = pn_samples(pn, os);
    let mut taps = Vec::with_capacity(y.n_rx() * y.n_tx() * n);
    for q in 0..y.n_rx() {
        for p in 0..y.n_tx() {
            let w = y.pair(q, p);
            for b in 0..n {
                let shift = b * os;
                let acc: Complex64 = (0..l).map(|i| w[(i + shift) % l] * x[i]).sum();
                taps.push(acc / l as f64);
            }
        }
    }
    Cir::from_taps(y.n_rx(), y.n_tx(), n, taps, 1.0 / y.chip_rate_hz, 0.0)
}

/// Power delay profile in dB, averaged over antenna pairs. Empty bins
/// give `-inf`.
pub fn pdp(cir: &Cir) -> Vec<f64> {
    let pairs = (cir.n_rx() * cir.n_tx()) as f64;
    let mut acc = vec![0.0; cir.n_taps()];
    for q in 0..cir.n_rx() {
        for p in 0..cir.n_tx() {
            for (a, t) in acc.iter_mut().zip(cir.pair(q, p)) {
                *a += t.norm_sqr();
            }
        }
    }
    acc.into_iter().map(|v| 10.0 * (v / pairs).log10()).collect()
}

/// `max(peak - dynamic_range, noise + 3)` in dB.
pub fn noise_threshold_db(peak_db: f64, noise_db: f64, dynamic_range_db: f64) -> f64 {
    (peak_db - dynamic_range_db).max(noise_db + 3.0)
}

/// Bins at or above `max(P_m - 30, P_n + 3)`.
pub fn threshold_mask(pdp_db: &[f64], peak_dbm: f64, noise_dbm: f64) -> Vec<bool> {
    let t = noise_threshold_db(peak_dbm, noise_dbm, 30.0);
    pdp_db.iter().map(|&v| v >= t).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_tap_cir(bin: usize, n: usize) -> Cir {
        let mut c = Cir::zeros(1, 1, n, 4e-9, 15e9).unwrap();
        c.pair_mut(0, 0)[bin] = Complex64::new(1.0, 0.0);
        c
    }

    #[test]
    fn pn_length_balance_autocorrelation() {
        let pn = PnSequence::default_1023();
        assert_eq!(pn.len(), 1023);
        assert_eq!(pn.chips.iter().filter(|&&c| c > 0.0).count(), 512);
        assert_eq!(pn.autocorrelation(0), 1023.0);
        for lag in 1..1023 {
            assert_eq!(pn.autocorrelation(lag), -1.0);
        }
    }

    #[test]
    fn non_primitive_rejected() {
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2
        assert!(matches!(gen_pn(4, 0b10101, 1), Err(Error::Config(_))));
        // x^4 + x + 1 is primitive
        assert_eq!(gen_pn(4, 0b10011, 3).unwrap().len(), 15);
        assert!(gen_pn(10, DEFAULT_PN_POLYNOMIAL, 0).is_err());
        assert!(gen_pn(10, 0x9, 1).is_err());
    }

    #[test]
    fn identity_channel_returns_chip_shape() {
        let pn = PnSequence::default_1023();
        let y = sound_link(&unit_tap_cir(0, 1023), &pn, &SounderResponse::ideal(), f64::NEG_INFINITY, 4, 0).unwrap();
        assert_eq!(y.samples_per_pair(), 4092);
        for (i, v) in y.pair(0, 0).iter().enumerate() {
            assert_abs_diff_eq!((v - Complex64::new(pn.chips[i / 4], 0.0)).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn delayed_tap_moves_correlation_peak() {
        let pn = PnSequence::default_1023();
        let y = sound_link(&unit_tap_cir(25, 1023), &pn, &SounderResponse::ideal(), f64::NEG_INFINITY, 4, 0).unwrap();
        let c = pn_correlate(&y, &pn).unwrap();
        let pk = c.pair(0, 0).iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert_eq!(pk, 25);
        assert_abs_diff_eq!(25.0 * c.bin_width_s, 100e-9, epsilon = 1e-15);
    }

    #[test]
    fn self_calibration_yields_chamber_impulse() {
        let pn = PnSequence::default_1023();
        let d_ane = SPEED_OF_LIGHT * 8e-9; // exactly two bins
        let cal = chamber_cir(d_ane, 15e9, 250e6, 1023).unwrap();
        let y = sound_link(&cal, &pn, &SounderResponse::default(), f64::NEG_INFINITY, 4, 1).unwrap();
        let h = ota_calibrate(&y, &y, d_ane, 15e9).unwrap();
        let taps = h.pair(0, 0);
        let g = SPEED_OF_LIGHT / (4.0 * PI * d_ane * 15e9);
        assert_abs_diff_eq!(taps[2].norm(), g, epsilon = 1e-3 * g);
        // the 1/f amplitude slope across the band leaks a little energy
        let rest: f64 = taps.iter().enumerate().filter(|(b, _)| *b != 2).map(|(_, t)| t.norm_sqr()).sum();
        assert!(rest < 1e-4 * g * g);
    }

    #[test]
    fn ill_conditioned_reference_detected() {
        let pn = PnSequence::default_1023();
        let y = sound_link(&unit_tap_cir(0, 1023), &pn, &SounderResponse::ideal(), f64::NEG_INFINITY, 4, 0).unwrap();
        let zero = Waveform::from_samples(1, 1, 4, 1023, y.chip_rate_hz, vec![Complex64::new(0.0, 0.0); 4092]).unwrap();
        assert!(matches!(
            ota_calibrate(&y, &zero, 1.0, 15e9),
            Err(Error::IllConditionedCalibration { .. })
        ));
    }

    #[test]
    fn cir_tensor_round_trip() {
        let mut c = Cir::zeros(2, 3, 15, 4e-9, 15e9).unwrap();
        for (i, t) in c.taps.iter_mut().enumerate() {
            *t = Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos());
        }
        let back = Cir::from_tensor(&c.to_tensor().unwrap(), 0).unwrap();
        for (a, b) in c.taps().iter().zip(back.taps()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(back.bin_width_s, 4e-9, epsilon = 1e-20);
    }

    #[test]
    fn pdp_and_threshold_rules() {
        let mut c = unit_tap_cir(3, 8);
        c.pair_mut(0, 0)[5] = Complex64::new(0.5, 0.0);
        let p = pdp(&c);
        assert_abs_diff_eq!(p[3], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[5], -6.0206, epsilon = 1e-4);
        assert_eq!(p[0], f64::NEG_INFINITY);
        let lin: f64 = p.iter().map(|v| 10f64.powf(v / 10.0)).sum();
        assert_abs_diff_eq!(lin, c.total_power(), epsilon = 1e-12);

        assert_eq!(noise_threshold_db(-60.0, -100.0, 30.0), -90.0);
        assert_eq!(threshold_mask(&[-85.0], -60.0, -100.0), vec![true]);
        assert_eq!(noise_threshold_db(-60.0, -65.0, 30.0), -62.0);
        assert_eq!(threshold_mask(&[-63.0], -60.0, -65.0), vec![false]);
        assert!(threshold_mask(&[-120.0, -110.0], -60.0, -100.0).iter().all(|m| !m));
    }

    #[test]
    fn noise_power_matches_floor() {
        let pn = PnSequence::default_1023();
        let mut silent = Cir::zeros(5, 5, 1023, 4e-9, 15e9).unwrap();
        silent.pair_mut(0, 0)[0] = Complex64::new(0.0, 0.0);
        let y = sound_link(&silent, &pn, &SounderResponse::default(), -130.0, 4, 9).unwrap();
        assert!(y.data().len() >= 100_000);
        let measured_db = 10.0 * y.mean_power().log10();
        assert!((measured_db + 130.0).abs() < 1.0, "{measured_db}");
        let again = sound_link(&silent, &pn, &SounderResponse::default(), -130.0, 4, 9).unwrap();
        assert_eq!(y, again);
    }
}

//! Binary tensor container.
//!
//! Layout: magic `UMCT`, then version, `N_s`, `N_f`, `N_Rx`, `N_Tx` as
//! little-endian `u32` (24-byte header), then `(re, im)` pairs as
//! little-endian `f32` in `[j][k][q][p]` row-major order. The frequency axis
//! is not stored; loaders rebuild it from the carrier and bandwidth.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use umimo_core::sounding::Waveform;
use umimo_core::{ChannelTensor, Complex64, FrequencyGrid};

use crate::error::{PipelineError, Result};

pub const MAGIC: [u8; 4] = *b"UMCT";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub version: u32,
    pub n_s: u32,
    pub n_f: u32,
    pub n_rx: u32,
    pub n_tx: u32,
}

impl TensorHeader {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n_s as usize, self.n_f as usize, self.n_rx as usize, self.n_tx as usize)
    }

    /// Payload size in bytes, `None` on overflow.
    pub fn payload_len(&self) -> Option<u64> {
        [self.n_s, self.n_f, self.n_rx, self.n_tx]
            .iter()
            .try_fold(8u64, |acc, &d| acc.checked_mul(d as u64))
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        for (i, v) in [self.version, self.n_s, self.n_f, self.n_rx, self.n_tx].iter().enumerate() {
            out[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(PipelineError::Format {
                offset: bytes.len() as u64,
                msg: format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
            });
        }
        if bytes[..4] != MAGIC {
            return Err(PipelineError::Format {
                offset: 0,
                msg: format!("bad magic {:02x?}", &bytes[..4]),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let h = Self {
            version: word(0),
            n_s: word(1),
            n_f: word(2),
            n_rx: word(3),
            n_tx: word(4),
        };
        if h.version != FORMAT_VERSION {
            return Err(PipelineError::Format {
                offset: 4,
                msg: format!("unsupported version {}", h.version),
            });
        }
        for (i, d) in [h.n_s, h.n_f, h.n_rx, h.n_tx].iter().enumerate() {
            if *d == 0 {
                return Err(PipelineError::Format {
                    offset: 8 + 4 * i as u64,
                    msg: "zero dimension".into(),
                });
            }
        }
        Ok(h)
    }
}

fn dims_u32(dims: (usize, usize, usize, usize)) -> Result<TensorHeader> {
    let c = |v: usize| {
        u32::try_from(v).map_err(|_| PipelineError::Validation(format!("dimension {v} exceeds u32")))
    };
    Ok(TensorHeader {
        version: FORMAT_VERSION,
        n_s: c(dims.0)?,
        n_f: c(dims.1)?,
        n_rx: c(dims.2)?,
        n_tx: c(dims.3)?,
    })
}

/// Serialize samples in `[j][k][q][p]` order under `header`.
pub fn encode(header: TensorHeader, data: &[Complex64]) -> Result<Vec<u8>> {
    let expected = header.payload_len().ok_or_else(|| PipelineError::Validation("tensor too large".into()))?;
    if expected != 8 * data.len() as u64 {
        return Err(PipelineError::Validation(format!(
            "{} samples do not match header dims {:?}",
            data.len(),
            header.dims()
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * data.len());
    out.extend_from_slice(&header.to_bytes());
    for (i, v) in data.iter().enumerate() {
        let (re, im) = (v.re as f32, v.im as f32);
        if !re.is_finite() || !im.is_finite() {
            return Err(PipelineError::Validation(format!(
                "sample {i} is not representable as a finite f32"
            )));
        }
        out.extend_from_slice(&re.to_le_bytes());
        out.extend_from_slice(&im.to_le_bytes());
    }
    Ok(out)
}

/// Parse a complete blob into its header and samples.
pub fn decode(bytes: &[u8]) -> Result<(TensorHeader, Vec<Complex64>)> {
    let header = TensorHeader::parse(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len().ok_or_else(|| PipelineError::Format {
        offset: 8,
        msg: "dimension product overflows".into(),
    })?;
    if payload.len() as u64 != expected {
        return Err(PipelineError::Format {
            offset: HEADER_LEN as u64 + (payload.len() as u64).min(expected),
            msg: format!(
                "payload is {} bytes, header dims {:?} require {expected}",
                payload.len(),
                header.dims()
            ),
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((header, data))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    f.write_all(bytes).map_err(|e| PipelineError::io(path, e))
}

pub fn read_blob(path: &Path) -> Result<(TensorHeader, Vec<Complex64>)> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    decode(&bytes)
}

/// Header only, without reading the payload into samples.
pub fn read_header(path: &Path) -> Result<TensorHeader> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let h = TensorHeader::parse(&bytes)?;
    let expected = h.payload_len().unwrap_or(u64::MAX);
    let got = (bytes.len() - HEADER_LEN) as u64;
    if got != expected {
        return Err(PipelineError::Format {
            offset: HEADER_LEN as u64 + got.min(expected),
            msg: format!("payload is {got} bytes, header dims {:?} require {expected}", h.dims()),
        });
    }
    Ok(h)
}

pub fn save_tensor(path: &Path, tensor: &ChannelTensor) -> Result<()> {
    let bytes = encode(dims_u32(tensor.dims())?, tensor.data())?;
    write_file(path, &bytes)
}

/// Load a tensor and attach the frequency grid of `carrier_hz` and
/// `bandwidth_hz`.
pub fn load_tensor(path: &Path, carrier_hz: f64, bandwidth_hz: f64) -> Result<ChannelTensor> {
    let (h, data) = read_blob(path)?;
    let (n_s, n_f, n_rx, n_tx) = h.dims();
    let grid = FrequencyGrid::band(carrier_hz, bandwidth_hz, n_f);
    Ok(ChannelTensor::from_data(n_s, n_rx, n_tx, grid.frequencies(), data)?)
}

/// Sampling parameters stored next to a waveform blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformMeta {
    pub oversample: usize,
    pub n_chips: usize,
    pub chip_rate_hz: f64,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Waveforms use the tensor layout with `N_s = 1` and the sample index on
/// the frequency axis, plus a JSON sidecar `<path>.json`.
pub fn save_waveform(path: &Path, w: &Waveform) -> Result<()> {
    let l = w.samples_per_pair();
    let (n_rx, n_tx) = (w.n_rx(), w.n_tx());
    let mut data = Vec::with_capacity(l * n_rx * n_tx);
    for n in 0..l {
        for q in 0..n_rx {
            for p in 0..n_tx {
                data.push(w.pair(q, p)[n]);
            }
        }
    }
    write_file(path, &encode(dims_u32((1, l, n_rx, n_tx))?, &data)?)?;
    let meta = WaveformMeta {
        oversample: w.oversample,
        n_chips: w.n_chips,
        chip_rate_hz: w.chip_rate_hz,
    };
    write_file(&sidecar(path), serde_json::to_string_pretty(&meta)?.as_bytes())
}

pub fn load_waveform(path: &Path) -> Result<Waveform> {
    let meta_path = sidecar(path);
    let meta: WaveformMeta = serde_json::from_slice(
        &fs::read(&meta_path).map_err(|e| PipelineError::io(&meta_path, e))?,
    )?;
    let (h, data) = read_blob(path)?;
    let (n_s, l, n_rx, n_tx) = h.dims();
    if n_s != 1 || l != meta.oversample * meta.n_chips {
        return Err(PipelineError::Validation(format!(
            "waveform blob dims {:?} disagree with sidecar {meta:?}",
            h.dims()
        )));
    }
    let mut samples = vec![Complex64::new(0.0, 0.0); data.len()];
    for n in 0..l {
        for q in 0..n_rx {
            for p in 0..n_tx {
                samples[(q * n_tx + p) * l + n] = data[(n * n_rx + q) * n_tx + p];
            }
        }
    }
    Ok(Waveform::from_samples(n_rx, n_tx, meta.oversample, meta.n_chips, meta.chip_rate_hz, samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_24_bytes_little_endian() {
        let h = TensorHeader {
            version: 1,
            n_s: 2,
            n_f: 3,
            n_rx: 4,
            n_tx: 5,
        };
        let b = h.to_bytes();
        assert_eq!(&b[..4], b"UMCT");
        assert_eq!(b[8], 2);
        assert_eq!(b[20], 5);
        assert_eq!(TensorHeader::parse(&b).unwrap(), h);
        assert_eq!(h.payload_len(), Some(8 * 120));
    }

    #[test]
    fn decode_rejects_bad_inputs() {
        let h = TensorHeader {
            version: 1,
            n_s: 1,
            n_f: 1,
            n_rx: 1,
            n_tx: 2,
        };
        let good = encode(h, &[Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)]).unwrap();
        assert!(decode(&good).is_ok());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(PipelineError::Format { offset: 0, .. })));
        assert!(matches!(decode(&good[..10]), Err(PipelineError::Format { offset: 10, .. })));
        assert!(matches!(decode(&good[..good.len() - 3]), Err(PipelineError::Format { .. })));
        let mut extra = good.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(matches!(decode(&extra), Err(PipelineError::Format { .. })));
        let mut zero = good.clone();
        zero[12] = 0;
        assert!(matches!(decode(&zero), Err(PipelineError::Format { offset: 12, .. })));
    }

    #[test]
    fn non_finite_samples_rejected() {
        let h = TensorHeader {
            version: 1,
            n_s: 1,
            n_f: 1,
            n_rx: 1,
            n_tx: 1,
        };
        assert!(encode(h, &[Complex64::new(f64::NAN, 0.0)]).is_err());
        assert!(encode(h, &[Complex64::new(1e300, 0.0)]).is_err());
    }
}

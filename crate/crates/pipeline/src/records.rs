//! MPC lists and array geometry references.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use umimo_core::geometry::HALF_WAVE_SPACING_M;
use umimo_core::{ArrayGeometry, Complex64, Mpc};

use crate::error::{PipelineError, Result};

/// One multipath component with units in the field names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcRecord {
    pub amplitude_re: f64,
    pub amplitude_im: f64,
    pub power_db: f64,
    pub delay_s: f64,
    pub aaod_rad: f64,
    pub aaoa_rad: f64,
    pub eaod_rad: f64,
    pub eaoa_rad: f64,
}

impl From<&Mpc> for MpcRecord {
    fn from(m: &Mpc) -> Self {
        Self {
            amplitude_re: m.amplitude.re,
            amplitude_im: m.amplitude.im,
            power_db: m.power_db(),
            delay_s: m.delay,
            aaod_rad: m.aaod,
            aaoa_rad: m.aaoa,
            eaod_rad: m.eaod,
            eaoa_rad: m.eaoa,
        }
    }
}

impl MpcRecord {
    pub fn to_mpc(&self) -> Result<Mpc> {
        Ok(Mpc::new(
            Complex64::new(self.amplitude_re, self.amplitude_im),
            self.delay_s,
            self.aaod_rad,
            self.aaoa_rad,
            self.eaod_rad,
            self.eaoa_rad,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcList {
    pub carrier_hz: f64,
    pub seed: Option<u64>,
    pub mpcs: Vec<MpcRecord>,
}

impl MpcList {
    pub fn new(carrier_hz: f64, seed: Option<u64>, mpcs: &[Mpc]) -> Self {
        Self {
            carrier_hz,
            seed,
            mpcs: mpcs.iter().map(MpcRecord::from).collect(),
        }
    }

    pub fn to_mpcs(&self) -> Result<Vec<Mpc>> {
        self.mpcs.iter().map(MpcRecord::to_mpc).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Build an array from a textual reference:
///
/// - `l_shaped_128`, `quad_panel_64`
/// - `ula:<n>[:<spacing_m>]`
/// - `planar:<rows>x<cols>[:<spacing_m>]`
/// - `l_shaped:<per_leg>[:<spacing_m>]`
/// - `quad_panel:<rows>x<cols>:<spacing_m>:<offset_m>`
///
/// Spacing defaults to half a wavelength at 15 GHz.
pub fn parse_geometry(reference: &str) -> Result<ArrayGeometry> {
    let bad = || PipelineError::Config(format!("unrecognised array reference '{reference}'"));
    let parts: Vec<&str> = reference.trim().split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let count = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let grid = |s: &str| -> Result<(usize, usize)> {
        let (r, c) = s.split_once('x').ok_or_else(bad)?;
        Ok((count(r)?, count(c)?))
    };
    let spacing = |i: usize| parts.get(i).map(|s| num(s)).unwrap_or(Ok(HALF_WAVE_SPACING_M));
    let g = match parts[0] {
        "l_shaped_128" if parts.len() == 1 => ArrayGeometry::l_shaped_128(),
        "quad_panel_64" if parts.len() == 1 => ArrayGeometry::quad_panel_64(),
        "ula" if (2..=3).contains(&parts.len()) => ArrayGeometry::ula(count(parts[1])?, spacing(2)?)?,
        "planar" if (2..=3).contains(&parts.len()) => {
            let (r, c) = grid(parts[1])?;
            ArrayGeometry::planar(r, c, spacing(2)?)?
        }
        "l_shaped" if (2..=3).contains(&parts.len()) => ArrayGeometry::l_shaped(count(parts[1])?, spacing(2)?)?,
        "quad_panel" if parts.len() == 4 => {
            let (r, c) = grid(parts[1])?;
            ArrayGeometry::quad_panel(r, c, num(parts[2])?, num(parts[3])?)?
        }
        _ => return Err(bad()),
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_references() {
        assert_eq!(parse_geometry("l_shaped_128").unwrap().len(), 128);
        assert_eq!(parse_geometry("quad_panel_64").unwrap().len(), 64);
        assert_eq!(parse_geometry("ula:8").unwrap().len(), 8);
        assert_eq!(parse_geometry("planar:4x8:0.02").unwrap().len(), 32);
        assert_eq!(parse_geometry("quad_panel:2x2:0.01:0.1").unwrap().len(), 16);
        for bad in ["", "ula", "ula:x", "planar:4", "hex:3", "l_shaped_128:1"] {
            assert!(matches!(parse_geometry(bad), Err(PipelineError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn mpc_record_round_trip() {
        let m = Mpc::new(Complex64::new(0.1, -0.2), 3e-7, 0.1, -0.2, 0.05, -0.03).unwrap();
        let list = MpcList::new(15e9, Some(3), &[m]);
        let json = serde_json::to_string(&list).unwrap();
        let back: MpcList = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_mpcs().unwrap()[0], m);
    }
}

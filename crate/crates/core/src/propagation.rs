//! Free-space and vegetation loss primitives.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::SPEED_OF_LIGHT;

/// Free-space path loss `20 log10(4 pi d f / c)` in dB.
pub fn fspl_db(distance_m: f64, freq_hz: f64) -> Result<f64> {
    ensure(distance_m.is_finite() && distance_m > 0.0, || {
        Error::InvalidArgument(format!("FSPL distance must be positive, got {distance_m}"))
    })?;
    ensure(freq_hz.is_finite() && freq_hz > 0.0, || {
        Error::InvalidArgument(format!("FSPL frequency must be positive, got {freq_hz}"))
    })?;
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m * freq_hz / SPEED_OF_LIGHT).log10())
}

/// Free-space amplitude gain `c / (4 pi d f)`.
pub fn free_space_gain(distance_m: f64, freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * distance_m * freq_hz)
}

/// Parameters of the COST 235 vegetation excess-loss model `A f^B d^C`
/// (`f` in MHz, `d` in metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost235Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Cost235Params {
    pub const OUT_OF_LEAF: Cost235Params = Cost235Params { a: 26.6, b: -0.2, c: 0.5 };
    pub const IN_LEAF: Cost235Params = Cost235Params { a: 15.6, b: -0.009, c: 0.26 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafState {
    OutOfLeaf,
    InLeaf,
}

impl LeafState {
    pub fn original(self) -> Cost235Params {
        match self {
            LeafState::OutOfLeaf => Cost235Params::OUT_OF_LEAF,
            LeafState::InLeaf => Cost235Params::IN_LEAF,
        }
    }
}

/// Vegetation excess loss in dB for `depth_m` of foliage at `freq_mhz`.
pub fn foliage_excess_loss_db(depth_m: f64, freq_mhz: f64, params: Cost235Params) -> Result<f64> {
    ensure(depth_m.is_finite() && depth_m >= 0.0, || {
        Error::InvalidArgument(format!("foliage depth must be non-negative, got {depth_m}"))
    })?;
    ensure(freq_mhz.is_finite() && freq_mhz > 0.0, || {
        Error::InvalidArgument(format!("frequency must be positive, got {freq_mhz} MHz"))
    })?;
    if depth_m == 0.0 {
        ensure(params.c > 0.0, || {
            Error::Domain(format!("0^C undefined for C = {}", params.c))
        })?;
        return Ok(0.0);
    }
    Ok(params.a * freq_mhz.powf(params.b) * depth_m.powf(params.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fspl_reference_values() {
        // 20 log10(4 pi * 50.03...) at 1 m, 15 GHz
        assert_abs_diff_eq!(fspl_db(1.0, 15e9).unwrap(), 55.9696, epsilon = 0.01);
        let d2 = fspl_db(20.0, 15e9).unwrap() - fspl_db(10.0, 15e9).unwrap();
        assert_abs_diff_eq!(d2, 20.0 * 2f64.log10(), epsilon = 1e-12);
        let f2 = fspl_db(1.0, 30e9).unwrap() - fspl_db(1.0, 15e9).unwrap();
        assert_abs_diff_eq!(f2, 6.0206, epsilon = 1e-4);
        assert!(fspl_db(0.0, 15e9).is_err());
        assert!(fspl_db(1.0, 0.0).is_err());
    }

    #[test]
    fn fspl_matches_free_space_gain() {
        let g = free_space_gain(42.0, 15e9);
        assert_abs_diff_eq!(-20.0 * g.log10(), fspl_db(42.0, 15e9).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn cost235_values() {
        let out = foliage_excess_loss_db(3.0, 15000.0, Cost235Params::OUT_OF_LEAF).unwrap();
        assert_abs_diff_eq!(out, 6.7332, epsilon = 1e-3);
        let inl = foliage_excess_loss_db(3.0, 15000.0, Cost235Params::IN_LEAF).unwrap();
        assert_abs_diff_eq!(inl, 19.0367, epsilon = 1e-3);
        assert_eq!(foliage_excess_loss_db(0.0, 900.0, Cost235Params::OUT_OF_LEAF).unwrap(), 0.0);
        let flat = Cost235Params { a: 1.0, b: 0.0, c: 0.0 };
        assert!(matches!(foliage_excess_loss_db(0.0, 900.0, flat), Err(Error::Domain(_))));
    }

    #[test]
    fn monotone_properties() {
        let mut prev = fspl_db(1.0, 15e9).unwrap();
        for i in 2..100 {
            let v = fspl_db(i as f64 * 0.7, 15e9).unwrap();
            assert!(v > prev);
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..50 {
            let v = foliage_excess_loss_db(i as f64 * 0.3, 15000.0, Cost235Params::IN_LEAF).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }
}

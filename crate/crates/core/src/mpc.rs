use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{angles_of, direction, ArrayGeometry, Vec3};
use crate::SPEED_OF_LIGHT;

/// One multipath component.
///
/// Departure angles are expressed in the transmit array's local frame and
/// arrival angles in the receive array's local frame; each is the
/// direction from the array towards the path's first/last interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mpc {
    /// Complex voltage gain.
    pub amplitude: Complex64,
    /// Propagation delay, seconds.
    pub delay: f64,
    /// Azimuth of departure, radians.
    pub aaod: f64,
    /// Azimuth of arrival, radians.
    pub aaoa: f64,
    /// Elevation of departure, radians.
    pub eaod: f64,
    /// Elevation of arrival, radians.
    pub eaoa: f64,
}

impl Mpc {
    pub fn new(amplitude: Complex64, delay: f64, aaod: f64, aaoa: f64, eaod: f64, eaoa: f64) -> Result<Self> {
        let m = Self {
            amplitude,
            delay,
            aaod,
            aaoa,
            eaod,
            eaoa,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::{FRAC_PI_2, PI};
        ensure(self.delay.is_finite() && self.delay >= 0.0, || {
            Error::InvalidArgument(format!("MPC delay must be >= 0, got {}", self.delay))
        })?;
        ensure(self.amplitude.re.is_finite() && self.amplitude.im.is_finite(), || {
            Error::InvalidArgument("MPC amplitude must be finite".into())
        })?;
        for (name, az) in [("AAoD", self.aaod), ("AAoA", self.aaoa)] {
            ensure((-PI..PI).contains(&az), || {
                Error::InvalidArgument(format!("{name} {az} outside [-pi, pi)"))
            })?;
        }
        for (name, el) in [("EAoD", self.eaod), ("EAoA", self.eaoa)] {
            ensure((-FRAC_PI_2..=FRAC_PI_2).contains(&el), || {
                Error::InvalidArgument(format!("{name} {el} outside [-pi/2, pi/2]"))
            })?;
        }
        Ok(())
    }

    /// `|alpha|^2`.
    pub fn power(&self) -> f64 {
        self.amplitude.norm_sqr()
    }

    pub fn power_db(&self) -> f64 {
        10.0 * self.power().log10()
    }

    /// Departure direction in the transmit array's local frame.
    pub fn departure_dir(&self) -> Vec3 {
        direction(self.aaod, self.eaod)
    }

    /// Arrival direction in the receive array's local frame.
    pub fn arrival_dir(&self) -> Vec3 {
        direction(self.aaoa, self.eaoa)
    }

    pub fn with_amplitude(mut self, amplitude: Complex64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Direct path between the array origins.
    pub fn line_of_sight(tx: &ArrayGeometry, rx: &ArrayGeometry, amplitude: Complex64) -> Result<Self> {
        let d = rx.origin - tx.origin;
        let dist = d.norm();
        ensure(dist > 0.0, || Error::Singularity("co-located arrays".into()))?;
        let (aaod, eaod) = angles_of(&tx.to_local_direction(&d));
        let (aaoa, eaoa) = angles_of(&rx.to_local_direction(&(-d)));
        Self::new(amplitude, dist / SPEED_OF_LIGHT, aaod, aaoa, eaod, eaoa)
    }

    /// Path reflected once at `point` (global frame).
    pub fn single_bounce(tx: &ArrayGeometry, rx: &ArrayGeometry, point: &Vec3, amplitude: Complex64) -> Result<Self> {
        let out = point - tx.origin;
        let back = point - rx.origin;
        ensure(out.norm() > 0.0 && back.norm() > 0.0, || {
            Error::Singularity("bounce point coincides with an array origin".into())
        })?;
        let (aaod, eaod) = angles_of(&tx.to_local_direction(&out));
        let (aaoa, eaoa) = angles_of(&rx.to_local_direction(&back));
        Self::new(
            amplitude,
            (out.norm() + back.norm()) / SPEED_OF_LIGHT,
            aaod,
            aaoa,
            eaod,
            eaoa,
        )
    }
}

/// Sort by descending `|alpha|`.
pub fn sort_by_power(mpcs: &mut [Mpc]) {
    mpcs.sort_by(|a, b| b.power().total_cmp(&a.power()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn los_angles_point_at_each_other() {
        let tx = ArrayGeometry::ula(4, 0.01).unwrap().with_origin(Vec3::new(0.0, 0.0, 10.0));
        let rx = ArrayGeometry::ula(4, 0.01)
            .unwrap()
            .with_origin(Vec3::new(30.0, 0.0, 0.0))
            .with_orientation(crate::Orientation::new(std::f64::consts::PI, 0.0));
        let m = Mpc::line_of_sight(&tx, &rx, Complex64::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(m.delay * SPEED_OF_LIGHT, (900.0f64 + 100.0).sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(m.aaod, 0.0, epsilon = 1e-12);
        assert!(m.eaod < 0.0);
        // the receive array faces back towards the transmitter
        assert_abs_diff_eq!(m.aaoa, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.eaoa, -m.eaod, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        let one = Complex64::new(1.0, 0.0);
        assert!(Mpc::new(one, -1e-9, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Mpc::new(one, 0.0, std::f64::consts::PI, 0.0, 0.0, 0.0).is_err());
        assert!(Mpc::new(one, 0.0, 0.0, 0.0, 1.6, 0.0).is_err());
        assert!(Mpc::new(Complex64::new(f64::INFINITY, 0.0), 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Mpc::new(one, 1e-7, -std::f64::consts::PI, 0.0, 0.0, 0.0).is_ok());
    }
}

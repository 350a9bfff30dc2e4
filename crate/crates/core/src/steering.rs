//! Spherical- and plane-wave array responses.
//!
//! Both follow the `exp(-j 2 pi f tau)` propagation convention. The plane
//! wave response is referenced to the array origin: an element displaced
//! by `x` towards the source direction `u` sees the wave `<u, x>/c`
//! earlier, so its entry is `exp(+j 2 pi f <u, x> / c)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure, Error, Result};
use crate::geometry::{direction, ArrayGeometry, Vec3};
use crate::SPEED_OF_LIGHT;

/// Per-element free-space response to a point source at `source` (global
/// frame): `c / (4 pi d_n f) * exp(-j 2 pi f d_n / c)`.
pub fn steering_spherical(geometry: &ArrayGeometry, source: &Vec3, freq_hz: f64) -> Result<Vec<Complex64>> {
    ensure(freq_hz.is_finite() && freq_hz > 0.0, || {
        Error::InvalidArgument(format!("frequency must be positive, got {freq_hz}"))
    })?;
    geometry
        .global_positions()
        .iter()
        .enumerate()
        .map(|(n, pos)| {
            let d = (source - pos).norm();
            ensure(d > 1e-12, || {
                Error::Singularity(format!("source coincides with element {n}"))
            })?;
            let amp = SPEED_OF_LIGHT / (4.0 * PI * d * freq_hz);
            Ok(Complex64::from_polar(amp, -2.0 * PI * freq_hz * d / SPEED_OF_LIGHT))
        })
        .collect()
}

/// Unit-magnitude plane-wave response towards local-frame direction
/// `(azimuth, elevation)`.
pub fn steering_planar(geometry: &ArrayGeometry, azimuth: f64, elevation: f64, freq_hz: f64) -> Result<Vec<Complex64>> {
    ensure((-PI..=PI).contains(&azimuth), || {
        Error::InvalidArgument(format!("azimuth {azimuth} outside [-pi, pi)"))
    })?;
    ensure((-PI / 2.0..=PI / 2.0).contains(&elevation), || {
        Error::InvalidArgument(format!("elevation {elevation} outside [-pi/2, pi/2]"))
    })?;
    ensure(freq_hz.is_finite() && freq_hz > 0.0, || {
        Error::InvalidArgument(format!("frequency must be positive, got {freq_hz}"))
    })?;
    let u = direction(azimuth, elevation);
    let mut out = vec![Complex64::new(0.0, 0.0); geometry.len()];
    planar_response(&geometry.elements, &u, freq_hz, &mut out);
    Ok(out)
}

/// Plane-wave response for direction `u` written into `out`.
pub(crate) fn planar_response(positions: &[Vec3], u: &Vec3, freq_hz: f64, out: &mut [Complex64]) {
    let k = 2.0 * PI * freq_hz / SPEED_OF_LIGHT;
    for (o, x) in out.iter_mut().zip(positions) {
        *o = Complex64::from_polar(1.0, k * u.dot(x));
    }
}

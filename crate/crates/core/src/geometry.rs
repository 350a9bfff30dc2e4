//! Antenna array geometry.
//!
//! Element positions are stored in the array-local frame: `+x` is the
//! array boresight, `+y` the horizontal axis and `+z` the vertical axis.
//! [`Orientation`] rotates the local frame into the global frame, and
//! `origin` translates it.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::SPEED_OF_LIGHT;

pub type Vec3 = Vector3<f64>;

/// Element spacing of the 128-element L-shaped array: a 64-element leg
/// spanning 63.2 cm.
pub const L_ARRAY_SPACING_M: f64 = 0.632 / 63.0;

/// Half a wavelength at 15 GHz, rounded to the 1 cm panel pitch.
pub const HALF_WAVE_SPACING_M: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    LShapedUla,
    Planar,
    QuadPanel,
    Custom,
}

/// Array attitude. `azimuth_rad` is the bearing of the boresight measured
/// from the global `+x` axis towards `+y`; `tilt_rad` raises the boresight
/// above the horizontal plane (negative values tilt downwards).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Orientation {
    pub azimuth_rad: f64,
    pub tilt_rad: f64,
}

impl Orientation {
    pub fn new(azimuth_rad: f64, tilt_rad: f64) -> Self {
        Self { azimuth_rad, tilt_rad }
    }

    /// Rotation taking local-frame vectors to the global frame.
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.azimuth_rad)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), -self.tilt_rad)
    }
}

/// Element radiation pattern, applied as a real amplitude gain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ElementPattern {
    #[default]
    Isotropic,
    /// Power pattern `cos(psi)^q` in the front half-space, `q` chosen so the
    /// half-power beamwidth equals `hpbw_rad`; zero behind the element.
    Cosine { hpbw_rad: f64 },
}

impl ElementPattern {
    /// The 120 degree element of the measurement arrays.
    pub fn cosine_120() -> Self {
        ElementPattern::Cosine {
            hpbw_rad: 120f64.to_radians(),
        }
    }

    /// Amplitude gain towards unit direction `dir` for an element facing `normal`.
    pub fn amplitude(&self, normal: &Vec3, dir: &Vec3) -> f64 {
        match *self {
            ElementPattern::Isotropic => 1.0,
            ElementPattern::Cosine { hpbw_rad } => {
                let cos_psi = normal.dot(dir);
                if cos_psi <= 0.0 {
                    return 0.0;
                }
                let q = 0.5f64.ln() / (0.5 * hpbw_rad).cos().ln();
                cos_psi.powf(0.5 * q)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Element positions, metres, local frame.
    pub elements: Vec<Vec3>,
    /// Facing direction of each element, local frame, unit norm.
    pub normals: Vec<Vec3>,
    /// Array reference point, metres, global frame.
    pub origin: Vec3,
    pub orientation: Orientation,
    pub kind: ArrayKind,
}

impl ArrayGeometry {
    /// Array from arbitrary local positions; all elements face `+x`.
    pub fn custom(elements: Vec<Vec3>) -> Result<Self> {
        let normals = vec![Vec3::x(); elements.len()];
        Self::from_parts(elements, normals, ArrayKind::Custom)
    }

    fn from_parts(elements: Vec<Vec3>, normals: Vec<Vec3>, kind: ArrayKind) -> Result<Self> {
        let geom = Self {
            elements,
            normals,
            origin: Vec3::zeros(),
            orientation: Orientation::default(),
            kind,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.elements.is_empty(), || {
            Error::InvalidArgument("array needs at least one element".into())
        })?;
        ensure(self.normals.len() == self.elements.len(), || {
            Error::InvalidArgument("one normal per element required".into())
        })?;
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        ensure(
            self.elements.iter().all(finite) && finite(&self.origin),
            || Error::InvalidArgument("element positions must be finite".into()),
        )?;
        ensure(
            self.normals.iter().all(|n| finite(n) && (n.norm() - 1.0).abs() < 1e-9),
            || Error::InvalidArgument("element normals must be unit vectors".into()),
        )
    }

    /// Uniform linear array along the local `y` axis, centred on the origin.
    pub fn ula(n: usize, spacing_m: f64) -> Result<Self> {
        let mid = (n as f64 - 1.0) / 2.0;
        let elements = (0..n)
            .map(|i| Vec3::new(0.0, (i as f64 - mid) * spacing_m, 0.0))
            .collect();
        Self::from_parts(elements, vec![Vec3::x(); n], ArrayKind::Custom)
    }

    /// Uniform planar array in the local `y`-`z` plane, `cols` along `y`
    /// and `rows` along `z`, centred on the origin. Element index runs
    /// along `y` first.
    pub fn planar(rows: usize, cols: usize, spacing_m: f64) -> Result<Self> {
        let my = (cols as f64 - 1.0) / 2.0;
        let mz = (rows as f64 - 1.0) / 2.0;
        let mut elements = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                elements.push(Vec3::new(
                    0.0,
                    (c as f64 - my) * spacing_m,
                    (r as f64 - mz) * spacing_m,
                ));
            }
        }
        Self::from_parts(elements, vec![Vec3::x(); rows * cols], ArrayKind::Planar)
    }

    /// L-shaped array: a horizontal leg of `per_leg` elements along `y`
    /// starting at the corner, then a vertical leg of `per_leg` elements
    /// along `z` starting one spacing above the corner.
    pub fn l_shaped(per_leg: usize, spacing_m: f64) -> Result<Self> {
        let mut elements = Vec::with_capacity(2 * per_leg);
        elements.extend((0..per_leg).map(|i| Vec3::new(0.0, i as f64 * spacing_m, 0.0)));
        elements.extend((0..per_leg).map(|i| Vec3::new(0.0, 0.0, (i + 1) as f64 * spacing_m)));
        Self::from_parts(elements, vec![Vec3::x(); 2 * per_leg], ArrayKind::LShapedUla)
    }

    /// The 64 x 64 L-shaped transmit array (128 elements).
    pub fn l_shaped_128() -> Self {
        Self::l_shaped(64, L_ARRAY_SPACING_M).expect("static geometry")
    }

    /// Four planar panels of `rows` x `cols` elements facing local azimuths
    /// 0, 90, 180 and 270 degrees, each placed `offset_m` from the array
    /// centre along its facing direction. Indices run panel by panel.
    pub fn quad_panel(rows: usize, cols: usize, spacing_m: f64, offset_m: f64) -> Result<Self> {
        let mut elements = Vec::with_capacity(4 * rows * cols);
        let mut normals = Vec::with_capacity(4 * rows * cols);
        let my = (cols as f64 - 1.0) / 2.0;
        let mz = (rows as f64 - 1.0) / 2.0;
        for panel in 0..4 {
            let az = panel as f64 * std::f64::consts::FRAC_PI_2;
            let normal = Vec3::new(az.cos(), az.sin(), 0.0);
            let tangent = Vec3::new(-az.sin(), az.cos(), 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    elements.push(
                        normal * offset_m
                            + tangent * ((c as f64 - my) * spacing_m)
                            + Vec3::z() * ((r as f64 - mz) * spacing_m),
                    );
                    normals.push(normal);
                }
            }
        }
        Self::from_parts(elements, normals, ArrayKind::QuadPanel)
    }

    /// The 64-element receive array: four 2 x 8 panels.
    pub fn quad_panel_64() -> Self {
        Self::quad_panel(2, 8, HALF_WAVE_SPACING_M, 0.05).expect("static geometry")
    }

    pub fn with_origin(mut self, origin: Vec3) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Element positions in the global frame.
    pub fn global_positions(&self) -> Vec<Vec3> {
        let rot = self.orientation.rotation();
        self.elements.iter().map(|e| self.origin + rot * e).collect()
    }

    /// Rotate a global-frame direction into the local frame.
    pub fn to_local_direction(&self, global: &Vec3) -> Vec3 {
        self.orientation.rotation().inverse() * global
    }

    pub fn to_global_direction(&self, local: &Vec3) -> Vec3 {
        self.orientation.rotation() * local
    }

    /// Largest distance between any two elements, metres.
    pub fn aperture(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.elements.iter().enumerate() {
            for b in &self.elements[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    /// Restrict to the element index range `[start, start + len)`.
    pub fn subarray(&self, start: usize, len: usize) -> Result<Self> {
        ensure(len > 0 && start + len <= self.len(), || {
            Error::Config(format!(
                "subarray [{start}, {}) exceeds {} elements",
                start + len,
                self.len()
            ))
        })?;
        Ok(Self {
            elements: self.elements[start..start + len].to_vec(),
            normals: self.normals[start..start + len].to_vec(),
            origin: self.origin,
            orientation: self.orientation,
            kind: ArrayKind::Custom,
        })
    }

    /// Reorder elements; `perm[i]` is the old index of new element `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            elements: perm.iter().map(|&i| self.elements[i]).collect(),
            normals: perm.iter().map(|&i| self.normals[i]).collect(),
            ..self.clone()
        }
    }
}

/// Unit direction for azimuth (from `+x` towards `+y`) and elevation
/// (above the `x`-`y` plane).
pub fn direction(azimuth: f64, elevation: f64) -> Vec3 {
    Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

/// Azimuth in `[-pi, pi)` and elevation in `[-pi/2, pi/2]` of a direction.
pub fn angles_of(dir: &Vec3) -> (f64, f64) {
    let n = dir.norm();
    let el = (dir.z / n).clamp(-1.0, 1.0).asin();
    let az = wrap_angle(dir.y.atan2(dir.x));
    (az, el)
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `2 D^2 / lambda`: the near-field / far-field boundary of an aperture.
pub fn rayleigh_distance(aperture_m: f64, carrier_hz: f64) -> Result<f64> {
    ensure(carrier_hz.is_finite() && carrier_hz > 0.0, || {
        Error::InvalidArgument(format!("carrier must be positive and finite, got {carrier_hz}"))
    })?;
    ensure(aperture_m.is_finite() && aperture_m >= 0.0, || {
        Error::InvalidArgument(format!("aperture must be non-negative, got {aperture_m}"))
    })?;
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    Ok(2.0 * aperture_m * aperture_m / lambda)
}

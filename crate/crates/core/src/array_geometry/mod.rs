//! Array geometry and response vectors.
//!
//! A lens array places `M = 1 + floor(2 D)` elements on the focal arc at
//! spatial angles `m / D`, `m = -(M-1)/2 ..= (M-1)/2`, where `D` is the lens
//! width in wavelengths. Its response to a plane wave with spatial frequency
//! `sin(phi)` is a shifted sinc: `sqrt(A) sinc(m - D sin(phi))`.
//!
//! All angles entering the channel model are carried as spatial frequencies
//! (`sin` of the azimuth angle); [`lens_response`] and [`upa_response`] accept
//! radians for convenience.

mod oracle;
mod upa;

pub use oracle::{lens_response_oracle, LensOracleConfig, PhaseMode};
pub use upa::{upa_response, UpaConfig};

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::ComplexVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid array configuration: {0}")]
    InvalidConfig(String),
    #[error("angle {0} outside the admissible range")]
    InvalidAngle(f64),
    #[error("quadrature did not converge (last change {change:.3e} with {points} points per axis)")]
    Accuracy { change: f64, points: usize },
}

/// Which end of the link an array sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArraySide {
    Receive,
    Transmit,
}

/// An array that maps a spatial frequency to a response vector.
pub trait ArrayResponse {
    fn element_count(&self) -> usize;
    /// Effective aperture in square wavelengths.
    fn aperture(&self) -> f64;
    /// Response at spatial frequency `sin(phi)`, which must lie in `[-1, 1]`.
    fn response_at(&self, spatial: f64) -> ComplexVector;
}

/// `sin(pi x) / (pi x)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Lens antenna array on one side of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct LensArrayConfig {
    aperture: f64,
    azimuth_dim: f64,
    element_count: usize,
}

impl LensArrayConfig {
    /// `aperture` is `D_y D_z / lambda^2`, `azimuth_dim` is `D_y / lambda`.
    pub fn new(aperture: f64, azimuth_dim: f64) -> Result<Self, GeometryError> {
        if !(aperture > 0.0 && aperture.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "aperture must be positive, got {aperture}"
            )));
        }
        if !(azimuth_dim > 0.0 && azimuth_dim.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "azimuth dimension must be positive, got {azimuth_dim}"
            )));
        }
        let element_count = 1 + (2.0 * azimuth_dim).floor() as usize;
        Ok(Self {
            aperture,
            azimuth_dim,
            element_count,
        })
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn azimuth_dim(&self) -> f64 {
        self.azimuth_dim
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    /// Largest element index, `(M-1)/2`.
    pub fn max_index(&self) -> i64 {
        (self.element_count as i64 - 1) / 2
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let h = self.max_index();
        -h..=h
    }

    pub fn contains(&self, m: i64) -> bool {
        m.abs() <= self.max_index()
    }

    /// Row of element `m` in a response vector.
    pub fn position(&self, m: i64) -> Option<usize> {
        self.contains(m).then(|| (m + self.max_index()) as usize)
    }

    /// Element index stored at row `pos`.
    pub fn index_at(&self, pos: usize) -> i64 {
        pos as i64 - self.max_index()
    }

    /// `sin(theta_m) = m / D`.
    pub fn element_spatial_angle(&self, m: i64) -> f64 {
        m as f64 / self.azimuth_dim
    }

    /// Response entry of element `m` at spatial frequency `spatial`.
    pub fn element_response(&self, m: i64, spatial: f64) -> f64 {
        self.aperture.sqrt() * sinc(m as f64 - self.azimuth_dim * spatial)
    }
}

impl ArrayResponse for LensArrayConfig {
    fn element_count(&self) -> usize {
        self.element_count
    }

    fn aperture(&self) -> f64 {
        self.aperture
    }

    fn response_at(&self, spatial: f64) -> ComplexVector {
        ComplexVector::from_iterator(
            self.element_count,
            self.indices()
                .map(|m| Complex64::new(self.element_response(m, spatial), 0.0)),
        )
    }
}

fn check_aoa(aoa: f64) -> Result<f64, GeometryError> {
    if aoa.is_finite() && aoa.abs() <= FRAC_PI_2 {
        Ok(aoa.sin())
    } else {
        Err(GeometryError::InvalidAngle(aoa))
    }
}

pub(crate) fn check_spatial(spatial: f64) -> Result<f64, GeometryError> {
    if spatial.is_finite() && spatial.abs() <= 1.0 {
        Ok(spatial)
    } else {
        Err(GeometryError::InvalidAngle(spatial))
    }
}

/// Lens array response for azimuth angle `aoa` (radians, `|aoa| <= pi/2`).
pub fn lens_response(config: &LensArrayConfig, aoa: f64) -> Result<ComplexVector, GeometryError> {
    let spatial = check_aoa(aoa)?;
    Ok(config.response_at(spatial))
}

/// Lens array response for spatial frequency `spatial = sin(aoa)`.
pub fn lens_response_spatial(config: &LensArrayConfig, spatial: f64) -> Result<ComplexVector, GeometryError> {
    Ok(config.response_at(check_spatial(spatial)?))
}

/// Splits the focusing point `spatial * dim` into the nearest element index
/// and the residual misalignment in `[-1/2, 1/2]`.
///
/// The index is not clipped to the array.
pub fn spatial_decompose(spatial: f64, dim: f64) -> (i64, f64) {
    let focus = spatial * dim;
    let index = focus.round();
    (index as i64, focus - index)
}

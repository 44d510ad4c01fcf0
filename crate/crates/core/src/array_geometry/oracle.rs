//! Direct numerical evaluation of the lens focal-arc field.
//!
//! A planar lens of `D_y x D_z` wavelengths is illuminated by a unit plane
//! wave with spatial frequency `sin(phi)`. The field at focal-arc point
//! `sin(theta)` is the aperture integral of the incident wave times
//! `exp(-j psi(y, z, theta))`, where `psi` is the phase accumulated through
//! the lens and on to the arc. With the first-order phase
//! `psi = 2 pi y sin(theta)` this reduces to a Fourier integral whose closed
//! form is the sinc response; the exact phase keeps the finite focal length.
//!
//! The integral is evaluated with the composite midpoint rule and Richardson
//! extrapolation, doubling the grid until successive extrapolants agree.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{check_aoa, check_spatial, GeometryError, LensArrayConfig};

/// Phase model across the lens aperture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// `psi = k0 y sin(theta)`.
    FirstOrder,
    /// Exact path-length difference for a lens with focal length `F`.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LensOracleConfig {
    focal_ratio: f64,
    points: usize,
    phase_mode: PhaseMode,
}

impl LensOracleConfig {
    pub const MIN_POINTS: usize = 64;
    const CONVERGED: f64 = 1e-9;
    const ACCURACY: f64 = 1e-6;
    const MAX_POINTS_1D: usize = 1 << 22;
    const MAX_POINTS_2D: usize = 1 << 12;

    /// `focal_ratio` is `F / D_y` and must exceed 1; `points` is the starting
    /// number of quadrature nodes per axis (at least 64).
    pub fn new(focal_ratio: f64, points: usize, phase_mode: PhaseMode) -> Result<Self, GeometryError> {
        if !(focal_ratio > 1.0 && focal_ratio.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "focal ratio must exceed 1, got {focal_ratio}"
            )));
        }
        if points < Self::MIN_POINTS {
            return Err(GeometryError::InvalidConfig(format!(
                "at least {} quadrature points required, got {points}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self {
            focal_ratio,
            points,
            phase_mode,
        })
    }

    pub fn first_order() -> Self {
        Self {
            focal_ratio: 100.0,
            points: Self::MIN_POINTS,
            phase_mode: PhaseMode::FirstOrder,
        }
    }

    pub fn exact(focal_ratio: f64) -> Result<Self, GeometryError> {
        Self::new(focal_ratio, Self::MIN_POINTS, PhaseMode::Exact)
    }

    pub fn focal_ratio(&self) -> f64 {
        self.focal_ratio
    }

    pub fn phase_mode(&self) -> PhaseMode {
        self.phase_mode
    }
}

/// Focal-arc field at `theta_spatial = sin(theta)` for a unit plane wave
/// arriving at `aoa` radians, normalised so that the ideal response is
/// `sqrt(A) sinc(D (sin(theta) - sin(aoa)))`.
pub fn lens_response_oracle(
    config: &LensArrayConfig,
    oracle: &LensOracleConfig,
    aoa: f64,
    theta_spatial: f64,
) -> Result<Complex64, GeometryError> {
    let spatial = check_aoa(aoa)?;
    let theta = check_spatial(theta_spatial)?;
    let width = config.azimuth_dim();
    let height = config.aperture() / width;
    // Incident field is exp(j 2 pi y sin(phi)) / sqrt(D_y D_z); with lengths
    // in wavelengths D_y D_z = A.
    let norm = 1.0 / config.aperture().sqrt();

    match oracle.phase_mode {
        PhaseMode::FirstOrder => {
            // The integrand does not depend on z, so the z-integral is exactly `height`.
            let detune = 2.0 * PI * (spatial - theta);
            let integral = richardson(oracle.points, LensOracleConfig::MAX_POINTS_1D, |n| {
                midpoint_1d(width, n, |y| Complex64::from_polar(1.0, detune * y))
            })?;
            Ok(integral * height * norm)
        }
        PhaseMode::Exact => {
            let focal = oracle.focal_ratio * width;
            let integral = richardson(oracle.points, LensOracleConfig::MAX_POINTS_2D, |n| {
                let nz = ((n as f64 * height / width).round() as usize).max(8);
                midpoint_2d(width, height, n, nz, |y, z| {
                    let r2 = focal * focal + y * y + z * z;
                    let shift = 2.0 * y * focal * theta;
                    // sqrt(r2 + shift) - sqrt(r2) without cancellation
                    let extra = shift / ((r2 + shift).sqrt() + r2.sqrt());
                    Complex64::from_polar(1.0, 2.0 * PI * (spatial * y - extra))
                })
            })?;
            Ok(integral * norm)
        }
    }
}

fn midpoint_1d(width: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Complex64 {
    let h = width / n as f64;
    let start = -0.5 * width + 0.5 * h;
    (0..n).map(|i| f(start + i as f64 * h)).sum::<Complex64>() * h
}

fn midpoint_2d(width: f64, height: f64, ny: usize, nz: usize, f: impl Fn(f64, f64) -> Complex64) -> Complex64 {
    let hy = width / ny as f64;
    let hz = height / nz as f64;
    let y0 = -0.5 * width + 0.5 * hy;
    let z0 = -0.5 * height + 0.5 * hz;
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..nz {
        let z = z0 + j as f64 * hz;
        let row: Complex64 = (0..ny).map(|i| f(y0 + i as f64 * hy, z)).sum();
        total += row;
    }
    total * hy * hz
}

/// Doubles the grid from `start` until two successive Richardson
/// extrapolants (h^2 elimination) agree.
fn richardson(start: usize, max: usize, rule: impl Fn(usize) -> Complex64) -> Result<Complex64, GeometryError> {
    let mut n = start;
    let mut fine = rule(2 * n);
    let mut previous = (4.0 * fine - rule(n)) / 3.0;
    let mut change = f64::INFINITY;
    while 4 * n <= max {
        let finer = rule(4 * n);
        let current = (4.0 * finer - fine) / 3.0;
        change = (current - previous).norm();
        if change <= LensOracleConfig::CONVERGED * current.norm().max(1.0) {
            return Ok(current);
        }
        fine = finer;
        previous = current;
        n *= 2;
    }
    if change <= LensOracleConfig::ACCURACY {
        Ok(previous)
    } else {
        Err(GeometryError::Accuracy { change, points: 2 * n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::sinc;

    fn closed_form(cfg: &LensArrayConfig, phi: f64, theta: f64) -> f64 {
        cfg.aperture().sqrt() * sinc(cfg.azimuth_dim() * (theta - phi))
    }

    #[test]
    fn first_order_broadside() {
        let cfg = LensArrayConfig::new(100.0, 10.0).unwrap();
        let v = lens_response_oracle(&cfg, &LensOracleConfig::first_order(), 0.0, 0.0).unwrap();
        assert!((v - Complex64::new(10.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn first_order_matches_closed_form_off_peak() {
        let cfg = LensArrayConfig::new(100.0, 10.0).unwrap();
        let oracle = LensOracleConfig::first_order();
        for (phi, theta) in [(0.18, 0.2), (0.18, 0.1), (-0.5, 0.35), (0.9, -0.9)] {
            let v = lens_response_oracle(&cfg, &oracle, f64::asin(phi), theta).unwrap();
            assert!(
                (v - Complex64::new(closed_form(&cfg, phi, theta), 0.0)).norm() < 1e-6,
                "{phi} {theta} {v}"
            );
        }
    }

    #[test]
    fn exact_mode_approaches_first_order() {
        let cfg = LensArrayConfig::new(100.0, 10.0).unwrap();
        let errors: Vec<f64> = [5.0, 20.0, 100.0]
            .iter()
            .map(|&ratio| {
                let oracle = LensOracleConfig::exact(ratio).unwrap();
                let v = lens_response_oracle(&cfg, &oracle, f64::asin(0.3), 0.3).unwrap();
                (v.norm() - 10.0).abs()
            })
            .collect();
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
        assert!(errors[2] < 0.05 * 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(LensOracleConfig::new(1.0, 64, PhaseMode::Exact).is_err());
        assert!(LensOracleConfig::new(5.0, 32, PhaseMode::Exact).is_err());
        assert!(LensOracleConfig::new(5.0, 64, PhaseMode::FirstOrder).is_ok());
        let cfg = LensArrayConfig::new(100.0, 10.0).unwrap();
        assert!(lens_response_oracle(&cfg, &LensOracleConfig::first_order(), 0.0, 1.5).is_err());
    }
}

use num_complex::Complex64;

use super::{check_aoa, ArrayResponse, ArraySide, GeometryError, LensArrayConfig};
use crate::numerics::ComplexVector;

/// Uniform planar array in the y-z plane with half-wavelength spacing.
///
/// Elements are stored with the y index fastest: row `i_z * n_y + i_y`.
/// Only azimuth steering is modelled, so the phase depends on `i_y` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct UpaConfig {
    aperture: f64,
    n_y: usize,
    n_z: usize,
}

impl UpaConfig {
    /// The element count `n_y * n_z` must equal `4 * aperture` (same physical
    /// area as a lens of that aperture at half-wavelength spacing).
    pub fn new(aperture: f64, n_y: usize, n_z: usize) -> Result<Self, GeometryError> {
        if !(aperture > 0.0 && aperture.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "aperture must be positive, got {aperture}"
            )));
        }
        if n_y == 0 || n_z == 0 {
            return Err(GeometryError::InvalidConfig("grid dimensions must be positive".into()));
        }
        let count = (n_y * n_z) as f64;
        if (count - 4.0 * aperture).abs() > 1e-9 * count {
            return Err(GeometryError::InvalidConfig(format!(
                "{n_y}x{n_z} grid has {count} elements, expected 4A = {}",
                4.0 * aperture
            )));
        }
        Ok(Self { aperture, n_y, n_z })
    }

    /// UPA occupying the same aperture as `lens`: `n_y = 2 D`, `n_z = 4A / n_y`.
    pub fn matching(lens: &LensArrayConfig) -> Result<Self, GeometryError> {
        let n_y = 2.0 * lens.azimuth_dim();
        if (n_y - n_y.round()).abs() > 1e-9 {
            return Err(GeometryError::InvalidConfig(format!("2D = {n_y} is not an integer")));
        }
        let n_y = n_y.round() as usize;
        let count = 4.0 * lens.aperture();
        if (count - count.round()).abs() > 1e-9 || !(count.round() as usize).is_multiple_of(n_y) {
            return Err(GeometryError::InvalidConfig(format!(
                "4A = {count} is not a multiple of n_y = {n_y}"
            )));
        }
        Self::new(lens.aperture(), n_y, count.round() as usize / n_y)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.n_y, self.n_z)
    }
}

impl ArrayResponse for UpaConfig {
    fn element_count(&self) -> usize {
        self.n_y * self.n_z
    }

    fn aperture(&self) -> f64 {
        self.aperture
    }

    fn response_at(&self, spatial: f64) -> ComplexVector {
        let amplitude = (self.aperture / self.element_count() as f64).sqrt();
        let row: Vec<Complex64> = (0..self.n_y)
            .map(|i| Complex64::from_polar(amplitude, std::f64::consts::PI * i as f64 * spatial))
            .collect();
        ComplexVector::from_iterator(self.element_count(), (0..self.n_z).flat_map(|_| row.iter().copied()))
    }
}

/// UPA steering vector toward azimuth `aoa` radians.
///
/// Both sides use the same vector; the channel applies the Hermitian on the
/// transmit side.
pub fn upa_response(config: &UpaConfig, aoa: f64, side: ArraySide) -> Result<ComplexVector, GeometryError> {
    let _ = side;
    Ok(config.response_at(check_aoa(aoa)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn broadside_is_uniform() {
        let cfg = UpaConfig::new(20.0, 20, 4).unwrap();
        let a = upa_response(&cfg, 0.0, ArraySide::Receive).unwrap();
        assert_eq!(a.len(), 80);
        for z in a.iter() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        assert!((a.norm_squared() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn matching_lens_grid() {
        let lens = LensArrayConfig::new(20.0, 10.0).unwrap();
        let upa = UpaConfig::matching(&lens).unwrap();
        assert_eq!(upa.grid(), (20, 4));
        assert_eq!(upa.element_count(), 80);
        let a = upa_response(&upa, 0.7, ArraySide::Transmit).unwrap();
        assert!(a.iter().all(|z| (z.norm() - 0.5).abs() < 1e-15));

        let tx = UpaConfig::matching(&LensArrayConfig::new(100.0, 20.0).unwrap()).unwrap();
        assert_eq!(tx.grid(), (40, 10));
        let rx = UpaConfig::matching(&LensArrayConfig::new(50.0, 10.0).unwrap()).unwrap();
        assert_eq!(rx.grid(), (20, 10));
        assert!(UpaConfig::matching(&LensArrayConfig::new(20.0, 10.3).unwrap()).is_err());
        assert!(UpaConfig::new(20.0, 20, 3).is_err());
    }

    #[test]
    fn dft_spaced_directions_are_orthogonal() {
        let cfg = UpaConfig::new(4.0, 16, 1).unwrap();
        let s = 0.3;
        let a = cfg.response_at(s);
        let b = cfg.response_at(s - 2.0 / 16.0);
        assert!(a.dotc(&b).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn norm_equals_aperture(spatial in -1.0f64..=1.0) {
            let cfg = UpaConfig::new(50.0, 20, 10).unwrap();
            prop_assert!((cfg.response_at(spatial).norm_squared() - 50.0).abs() < 1e-10);
        }
    }
}

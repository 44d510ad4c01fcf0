//! Orthogonal path division multiplexing for ideal AoAs/AoDs: each path is
//! received on its own antenna, giving `L` parallel SISO channels.

use thiserror::Error;

use crate::array_geometry::LensArrayConfig;
use crate::channel_model::PathSet;
use crate::numerics::{water_filled_rate, NumericsError};

/// Tolerance below which a misalignment counts as zero.
pub const IDEAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpdmError {
    #[error("path {path} is not ideally focused (eps_R = {eps_r:.3}, eps_T = {eps_t:.3}); use PDM")]
    NonIdeal { path: usize, eps_r: f64, eps_t: f64 },
    #[error("paths {first} and {second} focus on the same {side} antenna")]
    DuplicateFocus {
        first: usize,
        second: usize,
        side: &'static str,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelChannels {
    /// `|alpha_l|^2 A_R A_T`.
    pub gains: Vec<f64>,
    /// `(m_l, q_l)` per stream.
    pub mapping: Vec<(i64, i64)>,
    /// Receive-side delay compensation per stream, samples.
    pub delays: Vec<usize>,
}

pub fn opdm_decompose(
    paths: &PathSet,
    tx: &LensArrayConfig,
    rx: &LensArrayConfig,
    sample_rate: f64,
) -> Result<ParallelChannels, OpdmError> {
    let focus = paths.focus(rx, tx);
    for (l, f) in focus.iter().enumerate() {
        if f.eps_r.abs() >= IDEAL_TOLERANCE
            || f.eps_t.abs() >= IDEAL_TOLERANCE
            || !rx.contains(f.m)
            || !tx.contains(f.q)
        {
            return Err(OpdmError::NonIdeal {
                path: l,
                eps_r: f.eps_r,
                eps_t: f.eps_t,
            });
        }
    }
    for (i, a) in focus.iter().enumerate() {
        for (j, b) in focus.iter().enumerate().skip(i + 1) {
            if a.m == b.m {
                return Err(OpdmError::DuplicateFocus {
                    first: i,
                    second: j,
                    side: "receive",
                });
            }
            if a.q == b.q {
                return Err(OpdmError::DuplicateFocus {
                    first: i,
                    second: j,
                    side: "transmit",
                });
            }
        }
    }
    let scale = rx.aperture() * tx.aperture();
    Ok(ParallelChannels {
        gains: paths.paths().iter().map(|p| p.gain.norm_sqr() * scale).collect(),
        mapping: focus.iter().map(|f| (f.m, f.q)).collect(),
        delays: paths.sample_delays(sample_rate),
    })
}

/// Water-filled sum rate over the parallel channels, bps/Hz.
pub fn opdm_capacity(channels: &ParallelChannels, power: f64, noise: f64) -> Result<f64, OpdmError> {
    Ok(water_filled_rate(&channels.gains, power, noise)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{narrowband_matrix, Path};
    use crate::numerics::singular_values;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn lens(a: f64, d: f64) -> LensArrayConfig {
        LensArrayConfig::new(a, d).unwrap()
    }

    fn ideal(gains: &[Complex64], delays: &[f64]) -> PathSet {
        let spatial = [0.0, 0.2, -0.2];
        PathSet::new(
            (0..gains.len())
                .map(|l| Path::new(gains[l], delays[l], spatial[l], spatial[l]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ideal_decomposition() {
        let cfg = lens(20.0, 10.0);
        let g = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(0.3, 0.4),
        ];
        let ch = opdm_decompose(&ideal(&g, &[0.0, 10e-9, 31e-9]), &cfg, &cfg, 500e6).unwrap();
        assert_eq!(ch.mapping, vec![(0, 0), (2, 2), (-2, -2)]);
        assert_eq!(ch.delays, vec![0, 5, 16]);
        assert!((ch.gains[0] - 400.0).abs() < 1e-12);
        assert!((ch.gains[1] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_ideal_and_duplicates() {
        let cfg = lens(20.0, 10.0);
        let one = Complex64::new(1.0, 0.0);
        let bad = PathSet::new(vec![Path::new(one, 0.0, 0.36, 0.0)]).unwrap();
        assert!(matches!(
            opdm_decompose(&bad, &cfg, &cfg, 1.0),
            Err(OpdmError::NonIdeal { path: 0, .. })
        ));
        let dup = PathSet::new(vec![Path::new(one, 0.0, 0.2, 0.1), Path::new(one, 0.0, -0.3, 0.1)]).unwrap();
        assert!(matches!(
            opdm_decompose(&dup, &cfg, &cfg, 1.0),
            Err(OpdmError::DuplicateFocus { side: "transmit", .. })
        ));
    }

    #[test]
    fn capacity_examples() {
        let ch = ParallelChannels {
            gains: vec![2.0],
            mapping: vec![(0, 0)],
            delays: vec![0],
        };
        assert!((opdm_capacity(&ch, 0.5, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let ch = ParallelChannels {
            gains: vec![3.0; 3],
            mapping: vec![(0, 0); 3],
            delays: vec![0; 3],
        };
        let expect = 3.0 * (1.0 + 2.0 / 3.0 * 3.0f64).log2();
        assert!((opdm_capacity(&ch, 2.0, 1.0).unwrap() - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_eigenmode_water_filling(
            re in prop::collection::vec(-1.0f64..1.0, 3),
            im in prop::collection::vec(-1.0f64..1.0, 3),
            power in 0.01f64..100.0,
        ) {
            let cfg = lens(20.0, 10.0);
            let g: Vec<Complex64> = (0..3).map(|l| Complex64::new(re[l], im[l])).collect();
            prop_assume!(g.iter().all(|z| z.norm() > 1e-3));
            let ps = ideal(&g, &[0.0; 3]);
            let ch = opdm_decompose(&ps, &cfg, &cfg, 1.0).unwrap();
            let h = narrowband_matrix(&ps, &cfg, &cfg);
            let s = singular_values(&h).unwrap();
            let mut expect: Vec<f64> = g.iter().map(|z| z.norm() * 20.0).collect();
            expect.sort_by(|a, b| b.total_cmp(a));
            for i in 0..3 {
                prop_assert!((s[i] - expect[i]).abs() < 1e-9 * expect[0]);
            }
            let gains: Vec<f64> = s.iter().map(|v| v * v).collect();
            let eig = water_filled_rate(&gains, power, 1.0).unwrap();
            let c = opdm_capacity(&ch, power, 1.0).unwrap();
            prop_assert!((c - eig).abs() <= 1e-9 * c.max(1e-12), "{c} {eig} {s:?}");
        }

        #[test]
        fn monotone_in_power_and_gain(power in 0.01f64..100.0, bump in 1.0f64..3.0) {
            let ch = ParallelChannels { gains: vec![4.0, 1.0, 0.2], mapping: vec![(0, 0); 3], delays: vec![0; 3] };
            let c = opdm_capacity(&ch, power, 1.0).unwrap();
            prop_assert!(opdm_capacity(&ch, power * bump, 1.0).unwrap() >= c - 1e-12);
            let mut up = ch.clone();
            up.gains[2] *= bump;
            prop_assert!(opdm_capacity(&up, power, 1.0).unwrap() >= c - 1e-12);
        }

        #[test]
        fn independent_of_delays(d in prop::collection::vec(0.0f64..100e-9, 3)) {
            let cfg = lens(20.0, 10.0);
            let g = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(0.3, 0.4)];
            let a = opdm_decompose(&ideal(&g, &d), &cfg, &cfg, 500e6).unwrap();
            let b = opdm_decompose(&ideal(&g, &[0.0; 3]), &cfg, &cfg, 500e6).unwrap();
            prop_assert_eq!(opdm_capacity(&a, 1.0, 1.0).unwrap(), opdm_capacity(&b, 1.0, 1.0).unwrap());
        }
    }
}

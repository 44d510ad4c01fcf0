//! Supporting antenna subsets of each path and restriction of path responses
//! to the selected antennas.

use num_complex::Complex64;

use crate::array_geometry::LensArrayConfig;
use crate::channel_model::PathSet;
use crate::numerics::ComplexVector;

/// Slack on the strict boundary test so that focusing points such as
/// `10 * 0.3 = 3.0000000000000004` do not admit an element at distance
/// exactly `delta`.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Per-path supporting subsets and their unions, as sorted element indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSets {
    pub delta: u32,
    pub rx: Vec<Vec<i64>>,
    pub tx: Vec<Vec<i64>>,
    pub rx_union: Vec<i64>,
    pub tx_union: Vec<i64>,
}

impl SupportSets {
    pub fn paths(&self) -> usize {
        self.rx.len()
    }

    /// Array rows of the receive union.
    pub fn rx_positions(&self, rx: &LensArrayConfig) -> Vec<usize> {
        positions(&self.rx_union, rx)
    }

    pub fn tx_positions(&self, tx: &LensArrayConfig) -> Vec<usize> {
        positions(&self.tx_union, tx)
    }

    /// Position of each element of `subset` within the receive union.
    pub fn rx_local(&self, subset: &[i64]) -> Vec<usize> {
        local(&self.rx_union, subset)
    }

    pub fn tx_local(&self, subset: &[i64]) -> Vec<usize> {
        local(&self.tx_union, subset)
    }
}

fn positions(indices: &[i64], cfg: &LensArrayConfig) -> Vec<usize> {
    indices
        .iter()
        .map(|&m| cfg.position(m).expect("support index inside the array"))
        .collect()
}

fn local(union: &[i64], subset: &[i64]) -> Vec<usize> {
    subset
        .iter()
        .map(|m| union.binary_search(m).expect("subset of the union"))
        .collect()
}

/// Elements `m` with `|m - focus| < delta`, clipped to the array.
pub fn support_of(focus: f64, delta: u32, cfg: &LensArrayConfig) -> Vec<i64> {
    let reach = delta as f64 - BOUNDARY_SLACK;
    let lo = (focus - reach).ceil() as i64;
    let hi = (focus + reach).floor() as i64;
    (lo..=hi)
        .filter(|&m| cfg.contains(m) && (m as f64 - focus).abs() < reach)
        .collect()
}

fn union(sets: &[Vec<i64>]) -> Vec<i64> {
    let mut all: Vec<i64> = sets.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Supporting subsets for every path. `delta` must be at least 1.
///
/// # Panics
/// If `delta` is zero.
pub fn support_sets(paths: &PathSet, tx: &LensArrayConfig, rx: &LensArrayConfig, delta: u32) -> SupportSets {
    assert!(delta >= 1, "delta must be at least 1");
    let rx_sets: Vec<Vec<i64>> = paths
        .paths()
        .iter()
        .map(|p| support_of(rx.azimuth_dim() * p.aoa, delta, rx))
        .collect();
    let tx_sets: Vec<Vec<i64>> = paths
        .paths()
        .iter()
        .map(|p| support_of(tx.azimuth_dim() * p.aod, delta, tx))
        .collect();
    SupportSets {
        delta,
        rx_union: union(&rx_sets),
        tx_union: union(&tx_sets),
        rx: rx_sets,
        tx: tx_sets,
    }
}

/// Path responses restricted to the receive and transmit unions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedResponses {
    /// `a_R(phi_R,l)` over `M_S`.
    pub rx: Vec<ComplexVector>,
    /// `a_T(phi_T,l)` over `Q_S`.
    pub tx: Vec<ComplexVector>,
}

fn restricted(cfg: &LensArrayConfig, indices: &[i64], spatial: f64) -> ComplexVector {
    ComplexVector::from_iterator(
        indices.len(),
        indices
            .iter()
            .map(|&m| Complex64::new(cfg.element_response(m, spatial), 0.0)),
    )
}

pub fn reduce_channel(
    paths: &PathSet,
    sets: &SupportSets,
    tx: &LensArrayConfig,
    rx: &LensArrayConfig,
) -> ReducedResponses {
    ReducedResponses {
        rx: paths
            .paths()
            .iter()
            .map(|p| restricted(rx, &sets.rx_union, p.aoa))
            .collect(),
        tx: paths
            .paths()
            .iter()
            .map(|p| restricted(tx, &sets.tx_union, p.aod))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::sinc;
    use crate::channel_model::{sample_paths, ChannelStats, Path};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lens(a: f64, d: f64) -> LensArrayConfig {
        LensArrayConfig::new(a, d).unwrap()
    }

    fn paths(aoa: &[f64], aod: &[f64]) -> PathSet {
        PathSet::new(
            aoa.iter()
                .zip(aod)
                .map(|(&r, &t)| Path::new(Complex64::new(1.0, 0.0), 0.0, r, t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn example_sets() {
        let cfg = lens(20.0, 10.0);
        let s = support_sets(&paths(&[0.36, -0.27, 0.08], &[-0.2, 0.12, 0.24]), &cfg, &cfg, 1);
        assert_eq!(s.rx, vec![vec![3, 4], vec![-3, -2], vec![0, 1]]);
        assert_eq!(s.tx, vec![vec![-2], vec![1, 2], vec![2, 3]]);
        assert_eq!(s.rx_union, vec![-3, -2, 0, 1, 3, 4]);
        assert_eq!(s.tx_union, vec![-2, 1, 2, 3]);
        assert_eq!(s.tx_local(&[2, 3]), vec![2, 3]);
        assert_eq!(s.rx_positions(&cfg), vec![7, 8, 10, 11, 13, 14]);
    }

    #[test]
    fn boundary_is_strict() {
        let cfg = lens(20.0, 10.0);
        assert_eq!(support_of(3.0000000000000004, 1, &cfg), vec![3]);
        assert_eq!(support_of(2.9999999999999996, 1, &cfg), vec![3]);
        assert_eq!(support_of(3.0, 2, &cfg), vec![2, 3, 4]);
        assert_eq!(support_of(3.5, 1, &cfg), vec![3, 4]);
    }

    #[test]
    fn endfire_clips() {
        let cfg = lens(20.0, 10.0);
        assert_eq!(support_of(10.0, 1, &cfg), vec![10]);
        assert_eq!(support_of(-9.7, 1, &cfg), vec![-10, -9]);
        assert_eq!(support_of(9.98, 2, &cfg), vec![8, 9, 10]);
    }

    #[test]
    fn worst_misalignment_energy() {
        let cfg = lens(50.0, 10.0);
        let ps = paths(&[0.35], &[0.0]);
        let s = support_sets(&ps, &cfg, &cfg, 1);
        assert_eq!(s.rx[0], vec![3, 4]);
        let red = reduce_channel(&ps, &s, &cfg, &cfg);
        let oracle = 2.0 * sinc(0.5).powi(2);
        assert!((red.rx[0].norm_squared() / 50.0 - oracle).abs() < 1e-12);
        assert!(oracle > 0.81);
        // ideal AoD: indicator
        assert_eq!(red.tx[0].len(), 1);
        assert!((red.tx[0][0].re - 50f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn set_invariants(seed in any::<u64>(), count in 1usize..=5, delta in 1u32..=3) {
            let (rx, tx) = (lens(50.0, 10.0), lens(100.0, 20.0));
            let ps = sample_paths(&ChannelStats::default(), count, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let s = support_sets(&ps, &tx, &rx, delta);
            for (l, f) in ps.focus(&rx, &tx).iter().enumerate() {
                prop_assert!(s.rx[l].contains(&f.m.clamp(-rx.max_index(), rx.max_index())));
                prop_assert!(s.tx[l].contains(&f.q.clamp(-tx.max_index(), tx.max_index())));
                prop_assert!(!s.rx[l].is_empty() && s.rx[l].len() <= 2 * delta as usize);
                for &m in &s.rx[l] {
                    prop_assert!((m as f64 - 10.0 * ps.get(l).aoa).abs() < delta as f64);
                    prop_assert!(rx.contains(m));
                }
            }
            prop_assert!(s.rx_union.len() <= 2 * delta as usize * count);
            prop_assert!(s.tx_union.len() <= 2 * delta as usize * count);

            let wider = support_sets(&ps, &tx, &rx, delta + 1);
            for l in 0..count {
                prop_assert!(s.rx[l].iter().all(|m| wider.rx[l].contains(m)));
                prop_assert!(s.tx[l].iter().all(|q| wider.tx[l].contains(q)));
            }
        }

        #[test]
        fn own_subset_captures_mainlobe(spatial in -0.9f64..0.9) {
            let cfg = lens(50.0, 10.0);
            let ps = paths(&[spatial], &[0.0]);
            let s = support_sets(&ps, &cfg, &cfg, 1);
            let red = reduce_channel(&ps, &s, &cfg, &cfg);
            prop_assert!(red.rx[0].norm_squared() >= 0.81 * 50.0);
            for m in cfg.indices().filter(|m| !s.rx[0].contains(m)) {
                // first sidelobe peak of sinc^2 is 0.04719
                prop_assert!(cfg.element_response(m, spatial).powi(2) < 0.0472 * 50.0);
            }
        }
    }
}

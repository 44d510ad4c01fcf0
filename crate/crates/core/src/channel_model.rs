//! Sparse multi-path channel: deterministic construction from path
//! parameters and a stochastic generator for the 73 GHz statistics.
//!
//! Angles are carried as spatial frequencies `sin(phi)`. Path gains are
//! linear complex amplitudes, delays are in seconds.

use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::array_geometry::{spatial_decompose, ArrayResponse, LensArrayConfig};
use crate::numerics::ComplexMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid path {index}: {reason}")]
    InvalidPath { index: usize, reason: String },
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    /// Receive spatial frequency `sin(phi_R)`.
    pub aoa: f64,
    /// Transmit spatial frequency `sin(phi_T)`.
    pub aod: f64,
}

impl Path {
    pub fn new(gain: Complex64, delay: f64, aoa: f64, aod: f64) -> Self {
        Self { gain, delay, aoa, aod }
    }
}

/// Focusing indices and misalignments of one path on a pair of lens arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFocus {
    pub m: i64,
    pub q: i64,
    pub eps_r: f64,
    pub eps_t: f64,
}

/// The `L` paths of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<Path>,
    beta: f64,
}

impl PathSet {
    /// Validates the paths; the large-scale gain is taken as the total path power.
    pub fn new(paths: Vec<Path>) -> Result<Self, ChannelError> {
        let beta = paths.iter().map(|p| p.gain.norm_sqr()).sum();
        Self::with_beta(paths, beta)
    }

    fn with_beta(paths: Vec<Path>, beta: f64) -> Result<Self, ChannelError> {
        if paths.is_empty() {
            return Err(ChannelError::InvalidConfig("at least one path is required".into()));
        }
        for (index, p) in paths.iter().enumerate() {
            let reason = if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                "gain is not finite"
            } else if !(p.delay >= 0.0 && p.delay.is_finite()) {
                "delay must be non-negative"
            } else if !(-1.0..=1.0).contains(&p.aoa) {
                "AoA spatial frequency outside [-1, 1]"
            } else if !(-1.0..=1.0).contains(&p.aod) {
                "AoD spatial frequency outside [-1, 1]"
            } else {
                continue;
            };
            return Err(ChannelError::InvalidPath {
                index,
                reason: reason.into(),
            });
        }
        Ok(Self { paths, beta })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn get(&self, l: usize) -> &Path {
        &self.paths[l]
    }

    /// Large-scale gain of the realization (`sum |alpha_l|^2`).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn focus(&self, rx: &LensArrayConfig, tx: &LensArrayConfig) -> Vec<PathFocus> {
        self.paths
            .iter()
            .map(|p| {
                let (m, eps_r) = spatial_decompose(p.aoa, rx.azimuth_dim());
                let (q, eps_t) = spatial_decompose(p.aod, tx.azimuth_dim());
                PathFocus { m, q, eps_r, eps_t }
            })
            .collect()
    }

    /// Same paths with all delays set to zero.
    pub fn narrowband(&self) -> Self {
        let paths = self.paths.iter().map(|p| Path { delay: 0.0, ..*p }).collect();
        Self { paths, beta: self.beta }
    }

    /// Delay of each path in samples at rate `sample_rate`.
    pub fn sample_delays(&self, sample_rate: f64) -> Vec<usize> {
        self.paths
            .iter()
            .map(|p| (p.delay * sample_rate).round() as usize)
            .collect()
    }
}

/// How the AoAs or AoDs of a realization are placed.
#[derive(Debug, Clone, PartialEq)]
pub enum AngleRule {
    /// Explicit spatial frequencies, one per path.
    Fixed(Vec<f64>),
    /// Azimuth angles equally spaced over `[-spread/2, spread/2]` radians,
    /// both endpoints included.
    EqualSpread(f64),
    /// Azimuth angles drawn i.i.d. uniform over `[-spread/2, spread/2]` radians.
    UniformSpread(f64),
}

impl AngleRule {
    /// Spatial frequencies for `count` paths from degrees.
    pub fn fixed_degrees(degrees: &[f64]) -> Self {
        Self::Fixed(degrees.iter().map(|d| d.to_radians().sin()).collect())
    }

    fn validate(&self, count: usize) -> Result<(), ChannelError> {
        match self {
            Self::Fixed(list) => {
                if list.len() != count {
                    return Err(ChannelError::InvalidConfig(format!(
                        "{} fixed angles given for {count} paths",
                        list.len()
                    )));
                }
                if let Some(bad) = list.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
                    return Err(ChannelError::InvalidConfig(format!(
                        "spatial frequency {bad} outside [-1, 1]"
                    )));
                }
            }
            Self::EqualSpread(spread) | Self::UniformSpread(spread) => {
                if !(0.0..=PI).contains(spread) {
                    return Err(ChannelError::InvalidConfig(format!(
                        "angular spread {spread} outside [0, pi]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Deterministic rules consume no randomness.
    fn draw<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Fixed(list) => list.clone(),
            Self::EqualSpread(spread) => {
                if count == 1 {
                    return vec![0.0];
                }
                let step = spread / (count - 1) as f64;
                (0..count).map(|i| (-0.5 * spread + i as f64 * step).sin()).collect()
            }
            Self::UniformSpread(spread) => (0..count)
                .map(|_| ((rng.random::<f64>() - 0.5) * spread).sin())
                .collect(),
        }
    }
}

/// Statistics of the stochastic channel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub carrier_hz: f64,
    /// Path-loss intercept, dB.
    pub c1: f64,
    /// Path-loss exponent.
    pub c2: f64,
    /// Large-scale shadowing standard deviation, dB.
    pub shadowing_db: f64,
    /// Delay-power exponent.
    pub r_tau: f64,
    /// Per-path shadowing standard deviation, dB.
    pub zeta_db: f64,
    pub distance_m: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_hz: f64,
    /// Maximum excess delay, seconds. Zero gives a narrowband channel.
    pub max_delay_s: f64,
    pub aoa: AngleRule,
    pub aod: AngleRule,
}

impl Default for ChannelStats {
    fn default() -> Self {
        Self {
            carrier_hz: 73e9,
            c1: 86.6,
            c2: 2.45,
            shadowing_db: 8.0,
            r_tau: 3.0,
            zeta_db: 4.0,
            distance_m: 100.0,
            bandwidth_hz: 500e6,
            noise_dbm_hz: -174.0,
            max_delay_s: 100e-9,
            aoa: AngleRule::UniformSpread(PI),
            aod: AngleRule::UniformSpread(PI),
        }
    }
}

impl ChannelStats {
    pub fn validate(&self, paths: usize) -> Result<(), ChannelError> {
        let positive = [
            ("carrier", self.carrier_hz),
            ("distance", self.distance_m),
            ("bandwidth", self.bandwidth_hz),
            ("delay exponent", self.r_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("shadowing std", self.shadowing_db),
            ("per-path shadowing std", self.zeta_db),
            ("max delay", self.max_delay_s),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidConfig(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.c1.is_finite() && self.c2.is_finite() && self.noise_dbm_hz.is_finite()) {
            return Err(ChannelError::InvalidConfig(
                "path-loss and noise parameters must be finite".into(),
            ));
        }
        if paths == 0 {
            return Err(ChannelError::InvalidConfig("at least one path is required".into()));
        }
        self.aoa.validate(paths)?;
        self.aod.validate(paths)
    }

    /// Median path loss in dB (shadowing excluded).
    pub fn median_path_loss_db(&self) -> f64 {
        self.c1 + 10.0 * self.c2 * self.distance_m.log10()
    }

    /// Analytic mean of the lognormal large-scale gain.
    pub fn expected_beta(&self) -> f64 {
        let s = self.shadowing_db * LN_10 / 10.0;
        10f64.powf(-self.median_path_loss_db() / 10.0) * (0.5 * s * s).exp()
    }

    /// Noise power over the bandwidth, watts.
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    /// Transmit power for an average SNR of `snr_db`.
    pub fn transmit_power(&self, snr_db: f64) -> f64 {
        10f64.powf(snr_db / 10.0) * self.noise_power() / self.expected_beta()
    }
}

/// Draws one realization of `count` paths.
pub fn sample_paths<R: Rng + ?Sized>(stats: &ChannelStats, count: usize, rng: &mut R) -> Result<PathSet, ChannelError> {
    stats.validate(count)?;
    let xi = Normal::new(0.0, stats.shadowing_db).expect("validated std");
    let zeta = Normal::new(0.0, stats.zeta_db).expect("validated std");

    let loss_db = stats.median_path_loss_db() + xi.sample(rng);
    let beta = 10f64.powf(-loss_db / 10.0);

    let mut weights = Vec::with_capacity(count);
    let mut phases = Vec::with_capacity(count);
    let mut delays = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let z = zeta.sample(rng);
        weights.push(u.powf(stats.r_tau - 1.0) * 10f64.powf(-0.1 * z));
        phases.push(rng.random::<f64>() * 2.0 * PI);
        delays.push(rng.random::<f64>() * stats.max_delay_s);
    }
    delays.sort_by(f64::total_cmp);
    let total: f64 = weights.iter().sum();
    let aoas = stats.aoa.draw(count, rng);
    let aods = stats.aod.draw(count, rng);

    let paths = (0..count)
        .map(|l| {
            let kappa = weights[l] / total;
            Path::new(
                Complex64::from_polar((beta * kappa).sqrt(), phases[l]),
                delays[l],
                aoas[l],
                aods[l],
            )
        })
        .collect();
    PathSet::with_beta(paths, beta)
}

/// `H = sum_l alpha_l a_R(phi_R,l) a_T(phi_T,l)^H`.
pub fn narrowband_matrix<T: ArrayResponse, R: ArrayResponse>(paths: &PathSet, tx: &T, rx: &R) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(rx.element_count(), tx.element_count());
    for p in paths.paths() {
        let ar = rx.response_at(p.aoa) * p.gain;
        let at = tx.response_at(p.aod);
        h += ar * at.adjoint();
    }
    h
}

/// One discrete delay of a tapped channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    /// Delay in samples.
    pub delay: usize,
    pub matrix: ComplexMatrix,
}

/// Discrete-time channel over selected antenna rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TappedChannel {
    taps: Vec<Tap>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl TappedChannel {
    /// Taps must have strictly increasing delays and matching dimensions.
    pub fn new(taps: Vec<Tap>, rows: Vec<usize>, cols: Vec<usize>) -> Result<Self, ChannelError> {
        if taps.is_empty() || rows.is_empty() || cols.is_empty() {
            return Err(ChannelError::InvalidConfig(
                "tapped channel needs taps, rows and columns".into(),
            ));
        }
        if taps.windows(2).any(|w| w[0].delay >= w[1].delay) {
            return Err(ChannelError::InvalidConfig(
                "tap delays must be strictly increasing".into(),
            ));
        }
        if taps.iter().any(|t| t.matrix.shape() != (rows.len(), cols.len())) {
            return Err(ChannelError::InvalidConfig(
                "tap dimensions do not match the index lists".into(),
            ));
        }
        Ok(Self { taps, rows, cols })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    /// Array rows (element positions) covered by the matrices.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map_or(0, |t| t.delay)
    }

    /// Sum of all taps (the zero-frequency response).
    pub fn collapsed(&self) -> ComplexMatrix {
        self.taps
            .iter()
            .fold(ComplexMatrix::zeros(self.rows.len(), self.cols.len()), |acc, t| {
                acc + &t.matrix
            })
    }

    /// Keeps the given local rows and columns (positions within the current matrices).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Result<Self, ChannelError> {
        if rows.iter().any(|&r| r >= self.rows.len()) || cols.iter().any(|&c| c >= self.cols.len()) {
            return Err(ChannelError::InvalidConfig("restriction index out of range".into()));
        }
        let taps = self
            .taps
            .iter()
            .map(|t| Tap {
                delay: t.delay,
                matrix: t.matrix.select_rows(rows).select_columns(cols),
            })
            .collect();
        Self::new(
            taps,
            rows.iter().map(|&r| self.rows[r]).collect(),
            cols.iter().map(|&c| self.cols[c]).collect(),
        )
    }
}

/// Discrete-time channel at `sample_rate`, restricted to array rows `rx_rows`
/// and columns `tx_cols`. Paths whose delays round to the same sample share a tap.
pub fn tapped_channel<T: ArrayResponse, R: ArrayResponse>(
    paths: &PathSet,
    tx: &T,
    rx: &R,
    sample_rate: f64,
    rx_rows: &[usize],
    tx_cols: &[usize],
) -> Result<TappedChannel, ChannelError> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(ChannelError::InvalidConfig(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    if rx_rows.iter().any(|&r| r >= rx.element_count()) || tx_cols.iter().any(|&c| c >= tx.element_count()) {
        return Err(ChannelError::InvalidConfig("antenna subset outside the array".into()));
    }
    let mut taps: Vec<Tap> = Vec::new();
    for (p, delay) in paths.paths().iter().zip(paths.sample_delays(sample_rate)) {
        let ar = rx.response_at(p.aoa).select_rows(rx_rows) * p.gain;
        let at = tx.response_at(p.aod).select_rows(tx_cols);
        let term = ar * at.adjoint();
        match taps.binary_search_by_key(&delay, |t| t.delay) {
            Ok(i) => taps[i].matrix += term,
            Err(i) => taps.insert(i, Tap { delay, matrix: term }),
        }
    }
    TappedChannel::new(taps, rx_rows.to_vec(), tx_cols.to_vec())
}

/// All positions `0..n`.
pub fn all_positions(n: usize) -> Vec<usize> {
    (0..n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::UpaConfig;
    use crate::numerics::singular_values;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lens(a: f64, d: f64) -> LensArrayConfig {
        LensArrayConfig::new(a, d).unwrap()
    }

    fn example_paths() -> PathSet {
        let aoa = [0.36, -0.27, 0.08];
        let aod = [-0.2, 0.12, 0.24];
        let gains = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.8),
            Complex64::new(-0.6, 0.3),
        ];
        PathSet::new((0..3).map(|l| Path::new(gains[l], 0.0, aoa[l], aod[l])).collect()).unwrap()
    }

    #[test]
    fn default_stats() {
        let s = ChannelStats::default();
        assert_eq!(
            (s.c1, s.c2, s.shadowing_db, s.r_tau, s.zeta_db),
            (86.6, 2.45, 8.0, 3.0, 4.0)
        );
        assert!((s.median_path_loss_db() - 135.6).abs() < 1e-12);
        // -174 dBm/Hz over 500 MHz is about -87 dBm
        assert!((10.0 * s.noise_power().log10() + 30.0 - (-174.0 + 10.0 * 5e8f64.log10())).abs() < 1e-9);
        let db_gap = 10.0 * (s.expected_beta() / 10f64.powf(-13.56)).log10();
        let s_nat = 8.0 * LN_10 / 10.0;
        assert!((db_gap - 10.0 * (0.5 * s_nat * s_nat).exp().log10()).abs() < 1e-9);
        assert!((db_gap - 7.37).abs() < 0.01);
    }

    #[test]
    fn transmit_power_hits_target_snr() {
        let s = ChannelStats::default();
        let p = s.transmit_power(10.0);
        assert!((p * s.expected_beta() / s.noise_power() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn fractions_sum_to_one_and_delays_sorted() {
        let stats = ChannelStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let ps = sample_paths(&stats, 4, &mut rng).unwrap();
            let total: f64 = ps.paths().iter().map(|p| p.gain.norm_sqr()).sum();
            assert!((total / ps.beta() - 1.0).abs() < 1e-12);
            assert!(ps.paths().windows(2).all(|w| w[0].delay <= w[1].delay));
            assert!(ps.paths().iter().all(|p| (0.0..=100e-9).contains(&p.delay)));
        }
    }

    #[test]
    fn degenerate_exponents_give_equal_fractions() {
        let stats = ChannelStats {
            r_tau: 1.0,
            zeta_db: 0.0,
            ..ChannelStats::default()
        };
        let ps = sample_paths(&stats, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for p in ps.paths() {
            assert!((p.gain.norm_sqr() / ps.beta() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn path_loss_statistics() {
        let stats = ChannelStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 200_000;
        let (mut loss_sum, mut beta_sum) = (0.0, 0.0);
        for _ in 0..n {
            let ps = sample_paths(&stats, 3, &mut rng).unwrap();
            loss_sum += -10.0 * ps.beta().log10();
            beta_sum += ps.paths().iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        assert!((loss_sum / n as f64 - 135.6).abs() < 0.5);
        let ratio = beta_sum / n as f64 / stats.expected_beta();
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn angle_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eq = AngleRule::EqualSpread(150f64.to_radians()).draw(3, &mut rng);
        assert!((eq[0] + 75f64.to_radians().sin()).abs() < 1e-15);
        assert!(eq[1].abs() < 1e-15);
        assert!((eq[2] - 75f64.to_radians().sin()).abs() < 1e-15);
        let fixed = AngleRule::fixed_degrees(&[-15.0, 10.0, 45.0]);
        assert!(fixed.validate(3).is_ok() && fixed.validate(2).is_err());
        assert!(AngleRule::EqualSpread(4.0).validate(3).is_err());
        for s in AngleRule::UniformSpread(0.5).draw(100, &mut rng) {
            assert!(s.abs() <= 0.25f64.sin());
        }
    }

    #[test]
    fn narrowband_stats_have_zero_delay() {
        let stats = ChannelStats {
            max_delay_s: 0.0,
            ..ChannelStats::default()
        };
        let ps = sample_paths(&stats, 3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(ps.paths().iter().all(|p| p.delay == 0.0));
    }

    #[test]
    fn ideal_single_path_is_single_entry() {
        let (rx, tx) = (lens(20.0, 10.0), lens(30.0, 10.0));
        let alpha = Complex64::new(0.3, -0.4);
        let ps = PathSet::new(vec![Path::new(alpha, 0.0, 0.3, -0.5)]).unwrap();
        let h = narrowband_matrix(&ps, &tx, &rx);
        let (r, c) = (rx.position(3).unwrap(), tx.position(-5).unwrap());
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                let expect = if (i, j) == (r, c) {
                    alpha * 600f64.sqrt()
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((h[(i, j)] - expect).norm() < 1e-12);
            }
        }
        let f = ps.focus(&rx, &tx)[0];
        assert_eq!((f.m, f.q), (3, -5));
    }

    #[test]
    fn example_energy_concentrates_on_support_blocks() {
        // Checked per path: sidelobes of different paths add coherently, so
        // the sum can exceed the single-sinc bound by a few percent.
        let (rx, tx) = (lens(20.0, 10.0), lens(20.0, 10.0));
        let ps = example_paths();
        let support = |c: f64, m: i64| (m as f64 - c).abs() < 1.0;
        for p in ps.paths() {
            let single = PathSet::new(vec![*p]).unwrap();
            let h = narrowband_matrix(&single, &tx, &rx);
            for m in rx.indices() {
                for q in tx.indices() {
                    if !(support(10.0 * p.aoa, m) && support(10.0 * p.aod, q)) {
                        let v = h[(rx.position(m).unwrap(), tx.position(q).unwrap())].norm_sqr();
                        assert!(v < 0.047 * 400.0 * p.gain.norm_sqr(), "({m},{q}) {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn tapped_matches_narrowband_and_merges() {
        let (rx, tx) = (lens(20.0, 10.0), lens(20.0, 10.0));
        let ps = example_paths();
        let rows = all_positions(rx.element_count());
        let cols = all_positions(tx.element_count());
        let t = tapped_channel(&ps, &tx, &rx, 500e6, &rows, &cols).unwrap();
        assert_eq!(t.taps().len(), 1);
        assert_eq!(t.taps()[0].delay, 0);
        assert!((&t.taps()[0].matrix - narrowband_matrix(&ps, &tx, &rx)).norm() < 1e-13);

        let mut paths = ps.paths().to_vec();
        paths[0].delay = 10.1e-9; // 5.05 samples -> 5
        paths[1].delay = 9.9e-9; // 4.95 samples -> 5
        paths[2].delay = 60e-9;
        let ps = PathSet::new(paths).unwrap();
        let t = tapped_channel(&ps, &tx, &rx, 500e6, &rows[2..9], &cols[..5]).unwrap();
        assert_eq!(t.taps().iter().map(|t| t.delay).collect::<Vec<_>>(), vec![5, 30]);
        assert_eq!(t.rows(), &rows[2..9]);
        let full = narrowband_matrix(&ps, &tx, &rx)
            .select_rows(&rows[2..9])
            .select_columns(&cols[..5]);
        assert!((t.collapsed() - full).norm() < 1e-12);
        let r = t.restrict(&[0, 3], &[4]).unwrap();
        assert_eq!((r.rows(), r.cols()), (&[2usize, 5][..], &[4usize][..]));
        assert_eq!(r.taps()[1].matrix[(1, 0)], t.taps()[1].matrix[(3, 4)]);
    }

    #[test]
    fn tap_indices_within_cp() {
        let stats = ChannelStats::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let ps = sample_paths(&stats, 3, &mut rng).unwrap();
            assert!(ps.sample_delays(500e6).iter().all(|&n| n <= 50));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PathSet::new(vec![]).is_err());
        assert!(PathSet::new(vec![Path::new(Complex64::new(1.0, 0.0), -1.0, 0.0, 0.0)]).is_err());
        assert!(PathSet::new(vec![Path::new(Complex64::new(1.0, 0.0), 0.0, 1.2, 0.0)]).is_err());
        let stats = ChannelStats {
            aoa: AngleRule::Fixed(vec![0.1]),
            ..ChannelStats::default()
        };
        assert!(sample_paths(&stats, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(sample_paths(&ChannelStats::default(), 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    proptest! {
        #[test]
        fn rank_at_most_paths(seed in any::<u64>(), count in 1usize..=4) {
            let (rx, tx) = (lens(20.0, 10.0), lens(20.0, 10.0));
            let ps = sample_paths(&ChannelStats::default(), count, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let s = singular_values(&narrowband_matrix(&ps, &tx, &rx)).unwrap();
            for v in &s[count..] {
                prop_assert!(*v <= 1e-10 * s[0]);
            }
        }

        #[test]
        fn reciprocity(seed in any::<u64>()) {
            let (rx, tx) = (lens(50.0, 10.0), lens(100.0, 20.0));
            let ps = sample_paths(&ChannelStats::default(), 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let swapped = PathSet::new(
                ps.paths().iter().map(|p| Path::new(p.gain.conj(), p.delay, p.aod, p.aoa)).collect(),
            ).unwrap();
            let h = narrowband_matrix(&ps, &tx, &rx);
            let g = narrowband_matrix(&swapped, &rx, &tx);
            prop_assert!((h.adjoint() - g).norm() <= 1e-12 * h.norm());
        }

        #[test]
        fn upa_channel_norm(seed in any::<u64>()) {
            let (rx, tx) = (UpaConfig::new(20.0, 20, 4).unwrap(), UpaConfig::new(20.0, 20, 4).unwrap());
            let ps = PathSet::new(vec![Path::new(Complex64::new(1.0, 0.0), 0.0, (seed % 100) as f64 / 100.0, 0.2)]).unwrap();
            let h = narrowband_matrix(&ps, &tx, &rx);
            prop_assert!((h.norm_squared() - 400.0).abs() < 1e-9);
        }
    }
}

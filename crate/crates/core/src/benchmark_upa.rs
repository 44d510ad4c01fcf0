//! Conventional UPA benchmark: eigenmode capacity, MIMO-OFDM capacity with
//! cyclic-prefix overhead and power-based antenna selection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel_model::TappedChannel;
use crate::numerics::{
    significant_power_gains, singular_values, svd, water_filled_rate, ComplexMatrix, NumericsError, RANK_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("invalid OFDM configuration: {0}")]
    InvalidConfig(String),
    #[error("tap at delay {delay} does not fit in {subcarriers} subcarriers")]
    TapBeyondSymbol { delay: usize, subcarriers: usize },
    #[error("selection budget {budget} exceeds the {available} available antennas")]
    Budget { budget: usize, available: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfdmConfig {
    subcarriers: usize,
    cp_samples: usize,
    bandwidth: f64,
}

impl OfdmConfig {
    pub fn new(subcarriers: usize, cp_samples: usize, bandwidth: f64) -> Result<Self, BenchmarkError> {
        if !subcarriers.is_power_of_two() {
            return Err(BenchmarkError::InvalidConfig(format!(
                "{subcarriers} subcarriers is not a power of two"
            )));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(BenchmarkError::InvalidConfig(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            subcarriers,
            cp_samples,
            bandwidth,
        })
    }

    /// CP length rounded to whole samples at the bandwidth's sample rate.
    pub fn with_cp_duration(subcarriers: usize, cp_seconds: f64, bandwidth: f64) -> Result<Self, BenchmarkError> {
        if !(cp_seconds >= 0.0 && cp_seconds.is_finite()) {
            return Err(BenchmarkError::InvalidConfig(format!(
                "CP duration must be non-negative, got {cp_seconds}"
            )));
        }
        Self::new(subcarriers, (cp_seconds * bandwidth).round() as usize, bandwidth)
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn cp_samples(&self) -> usize {
        self.cp_samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `N / (N + cp)`.
    pub fn efficiency(&self) -> f64 {
        self.subcarriers as f64 / (self.subcarriers + self.cp_samples) as f64
    }
}

impl Default for OfdmConfig {
    /// 512 subcarriers and a 100 ns CP at 500 MHz (50 samples).
    fn default() -> Self {
        Self {
            subcarriers: 512,
            cp_samples: 50,
            bandwidth: 500e6,
        }
    }
}

/// Water-filled eigenmode capacity of a flat channel, bps/Hz. Zero for a
/// zero matrix.
pub fn eigenmode_capacity(h: &ComplexMatrix, power: f64, noise: f64) -> Result<f64, BenchmarkError> {
    let gains = significant_power_gains(&singular_values(h)?);
    if gains.is_empty() {
        return Ok(0.0);
    }
    Ok(water_filled_rate(&gains, power, noise)?)
}

fn check_taps(channel: &TappedChannel, subcarriers: usize) -> Result<(), BenchmarkError> {
    match channel.taps().iter().find(|t| t.delay >= subcarriers) {
        Some(t) => Err(BenchmarkError::TapBeyondSymbol {
            delay: t.delay,
            subcarriers,
        }),
        None => Ok(()),
    }
}

fn phase(k: usize, delay: usize, subcarriers: usize) -> Complex64 {
    // reduce first to keep the argument small
    let turns = (k * delay) % subcarriers;
    Complex64::from_polar(1.0, -2.0 * PI * turns as f64 / subcarriers as f64)
}

/// `H_k = sum_t T_t exp(-j 2 pi k d_t / N)` for `k = 0..N`.
pub fn ofdm_subchannels(channel: &TappedChannel, subcarriers: usize) -> Result<Vec<ComplexMatrix>, BenchmarkError> {
    check_taps(channel, subcarriers)?;
    Ok((0..subcarriers)
        .map(|k| {
            channel.taps().iter().fold(
                ComplexMatrix::zeros(channel.rows().len(), channel.cols().len()),
                |acc, t| acc + &t.matrix * phase(k, t.delay, subcarriers),
            )
        })
        .collect())
}

/// Capacity over explicit per-subcarrier matrices: one water-filling over
/// every eigen-gain with total power `N P`, scaled by the CP efficiency.
pub fn mimo_ofdm_capacity(
    subchannels: &[ComplexMatrix],
    power: f64,
    noise: f64,
    config: &OfdmConfig,
) -> Result<f64, BenchmarkError> {
    let mut gains = Vec::new();
    for h in subchannels {
        gains.extend(significant_power_gains(&singular_values(h)?));
    }
    ofdm_rate(&gains, power, noise, config)
}

fn ofdm_rate(gains: &[f64], power: f64, noise: f64, config: &OfdmConfig) -> Result<f64, BenchmarkError> {
    if gains.is_empty() {
        return Ok(0.0);
    }
    let n = config.subcarriers as f64;
    Ok(config.efficiency() * water_filled_rate(gains, n * power, noise)? / n)
}

/// Orthonormal basis of the column space, ranked by `RANK_TOLERANCE`.
fn range_basis(m: &ComplexMatrix) -> Result<ComplexMatrix, BenchmarkError> {
    let d = svd(m)?;
    let max = d.singular_values.first().copied().unwrap_or(0.0);
    let rank = d
        .singular_values
        .iter()
        .filter(|s| **s > RANK_TOLERANCE * max && max > 0.0)
        .count();
    Ok(d.left.columns(0, rank.max(1)).into_owned())
}

/// Squared singular values of every subcarrier channel.
///
/// All `H_k` share the column space of the stacked taps `[T_1 .. T_n]` and
/// the row space of `[T_1; ..; T_n]`, so each is represented exactly by a
/// small core `U^H H_k V` whose size is the tap rank rather than the array size.
pub fn ofdm_power_gains(channel: &TappedChannel, subcarriers: usize) -> Result<Vec<Vec<f64>>, BenchmarkError> {
    check_taps(channel, subcarriers)?;
    let (rows, cols) = (channel.rows().len(), channel.cols().len());
    let taps = channel.taps();
    let mut wide = ComplexMatrix::zeros(rows, cols * taps.len());
    let mut tall = ComplexMatrix::zeros(rows * taps.len(), cols);
    for (i, t) in taps.iter().enumerate() {
        wide.columns_mut(i * cols, cols).copy_from(&t.matrix);
        tall.rows_mut(i * rows, rows).copy_from(&t.matrix);
    }
    let u = range_basis(&wide)?;
    let v = range_basis(&tall.adjoint())?;
    let cores: Vec<(usize, ComplexMatrix)> = taps.iter().map(|t| (t.delay, u.adjoint() * &t.matrix * &v)).collect();
    let (r, c) = (u.ncols(), v.ncols());
    (0..subcarriers)
        .into_par_iter()
        .map(|k| {
            let hk = cores.iter().fold(ComplexMatrix::zeros(r, c), |acc, (d, core)| {
                acc + core * phase(k, *d, subcarriers)
            });
            Ok(singular_values(&hk)?.iter().map(|s| s * s).collect())
        })
        .collect()
}

/// [`mimo_ofdm_capacity`] evaluated from taps through [`ofdm_power_gains`].
pub fn mimo_ofdm_capacity_tapped(
    channel: &TappedChannel,
    power: f64,
    noise: f64,
    config: &OfdmConfig,
) -> Result<f64, BenchmarkError> {
    let gains = ofdm_power_gains(channel, config.subcarriers)?;
    ofdm_capacity_from_gains(&gains, power, noise, config)
}

/// Capacity from precomputed per-subcarrier squared singular values.
pub fn ofdm_capacity_from_gains(
    gains: &[Vec<f64>],
    power: f64,
    noise: f64,
    config: &OfdmConfig,
) -> Result<f64, BenchmarkError> {
    let pooled: Vec<f64> = gains
        .iter()
        .flat_map(|g| significant_power_gains(&sqrt_all(g)))
        .collect();
    ofdm_rate(&pooled, power, noise, config)
}

fn sqrt_all(gains: &[f64]) -> Vec<f64> {
    gains.iter().map(|g| g.max(0.0).sqrt()).collect()
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Power-based selection: the `n_rx` rows with the largest energy summed over
/// taps and columns, then the `n_tx` columns with the largest energy on those
/// rows. Returns sorted local positions; ties go to the lower position.
pub fn power_select_antennas(
    channel: &TappedChannel,
    n_rx: usize,
    n_tx: usize,
) -> Result<(Vec<usize>, Vec<usize>), BenchmarkError> {
    let (rows, cols) = (channel.rows().len(), channel.cols().len());
    if n_rx > rows || n_rx == 0 {
        return Err(BenchmarkError::Budget {
            budget: n_rx,
            available: rows,
        });
    }
    if n_tx > cols || n_tx == 0 {
        return Err(BenchmarkError::Budget {
            budget: n_tx,
            available: cols,
        });
    }
    let mut row_energy = vec![0.0; rows];
    for t in channel.taps() {
        for (i, e) in row_energy.iter_mut().enumerate() {
            *e += t.matrix.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    let chosen_rows = top_k(&row_energy, n_rx);
    let mut col_energy = vec![0.0; cols];
    for t in channel.taps() {
        for (j, e) in col_energy.iter_mut().enumerate() {
            *e += chosen_rows.iter().map(|&i| t.matrix[(i, j)].norm_sqr()).sum::<f64>();
        }
    }
    Ok((chosen_rows, top_k(&col_energy, n_tx)))
}

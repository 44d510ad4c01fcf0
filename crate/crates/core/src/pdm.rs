//! Path division multiplexing for arbitrary AoAs/AoDs.
//!
//! One data stream per path: stream `l` is beamed toward path `l` with an
//! MRT precoder over the transmit support `Q_S` and detected with an MRC or
//! MMSE combiner over the receive support `M_S`, synchronised to the delay
//! of path `l`. The other paths of stream `l` show up as inter-symbol
//! interference, the other streams as inter-stream interference.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::array_geometry::LensArrayConfig;
use crate::channel_model::{PathSet, TappedChannel};
use crate::numerics::{hermitian_solve, water_fill, ComplexMatrix, ComplexVector, NumericsError};
use crate::selection::{reduce_channel, SupportSets};

/// Minimum symbol count for [`simulate_symbols`].
pub const MIN_SYMBOLS: usize = 10_000;

/// Interference below this fraction of the desired power is treated as
/// exactly zero in noise-free simulation.
const NUMERICAL_FLOOR: f64 = 1e-20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdmError {
    #[error("path {0} has a zero response on the selected antennas")]
    DegeneratePath(usize),
    #[error("invalid link design: {0}")]
    InvalidDesign(String),
    #[error("{requested} symbols requested, at least {minimum} needed for stable estimates")]
    TooFewSymbols { requested: usize, minimum: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Path responses restricted to `M_S` and `Q_S`, with gains and delays.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmGeometry {
    pub rx: Vec<ComplexVector>,
    pub tx: Vec<ComplexVector>,
    pub gains: Vec<Complex64>,
    /// Path delays in samples.
    pub delays: Vec<usize>,
    pub rx_aperture: f64,
    pub tx_aperture: f64,
}

impl PdmGeometry {
    pub fn new(
        paths: &PathSet,
        sets: &SupportSets,
        tx: &LensArrayConfig,
        rx: &LensArrayConfig,
        sample_rate: f64,
    ) -> Self {
        let reduced = reduce_channel(paths, sets, tx, rx);
        Self {
            rx: reduced.rx,
            tx: reduced.tx,
            gains: paths.paths().iter().map(|p| p.gain).collect(),
            delays: paths.sample_delays(sample_rate),
            rx_aperture: rx.aperture(),
            tx_aperture: tx.aperture(),
        }
    }

    pub fn paths(&self) -> usize {
        self.gains.len()
    }

    /// `|alpha_l|^2 A_R A_T`, the per-stream gains used for power allocation.
    pub fn stream_gains(&self) -> Vec<f64> {
        let scale = self.rx_aperture * self.tx_aperture;
        self.gains.iter().map(|g| g.norm_sqr() * scale).collect()
    }

    /// Narrowband channel over `M_S x Q_S`.
    pub fn channel(&self) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros(self.rx[0].len(), self.tx[0].len());
        for l in 0..self.paths() {
            h += (&self.rx[l] * self.gains[l]) * self.tx[l].adjoint();
        }
        h
    }
}

fn normalized(vectors: &[ComplexVector]) -> Result<Vec<ComplexVector>, PdmError> {
    vectors
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let n = a.norm();
            if n > 0.0 {
                Ok(a / Complex64::new(n, 0.0))
            } else {
                Err(PdmError::DegeneratePath(l))
            }
        })
        .collect()
}

/// `w_l = a_T,l / ||a_T,l||` over `Q_S`.
pub fn mrt_precoders(geometry: &PdmGeometry) -> Result<Vec<ComplexVector>, PdmError> {
    normalized(&geometry.tx)
}

/// `v_l = a_R,l / ||a_R,l||` over `M_S`.
pub fn mrc_combiners(geometry: &PdmGeometry) -> Result<Vec<ComplexVector>, PdmError> {
    normalized(&geometry.rx)
}

/// `|a_T,k^H w_l'|^2` for every path `k` and stream `l'`.
fn transmit_coupling(geometry: &PdmGeometry, precoders: &[ComplexVector]) -> Vec<Vec<f64>> {
    geometry
        .tx
        .iter()
        .map(|a| precoders.iter().map(|w| a.dotc(w).norm_sqr()).collect())
        .collect()
}

/// Effective-noise covariance of stream `l`: interference through each
/// receive response plus white noise.
fn interference_covariance(
    geometry: &PdmGeometry,
    coupling: &[Vec<f64>],
    powers: &[f64],
    noise: f64,
    l: usize,
) -> ComplexMatrix {
    let n = geometry.rx[0].len();
    let mut c = ComplexMatrix::identity(n, n) * Complex64::new(noise, 0.0);
    for k in 0..geometry.paths() {
        let mut weight = 0.0;
        for (stream, &p) in powers.iter().enumerate() {
            if stream == l && k == l {
                continue;
            }
            weight += p * geometry.gains[k].norm_sqr() * coupling[k][stream];
        }
        if weight > 0.0 {
            let a = &geometry.rx[k];
            c += a * a.adjoint() * Complex64::new(weight, 0.0);
        }
    }
    c
}

/// MMSE combiners `v_l ∝ C_l^{-1} a_R,l`. Falls back to MRC (second value
/// `true`) if any `C_l` cannot be factorised.
pub fn mmse_combiners(
    geometry: &PdmGeometry,
    precoders: &[ComplexVector],
    powers: &[f64],
    noise: f64,
) -> Result<(Vec<ComplexVector>, bool), PdmError> {
    let coupling = transmit_coupling(geometry, precoders);
    let mut combiners = Vec::with_capacity(geometry.paths());
    for l in 0..geometry.paths() {
        let c = interference_covariance(geometry, &coupling, powers, noise, l);
        match hermitian_solve(&c, &geometry.rx[l]) {
            Ok(v) if v.norm() > 0.0 => combiners.push(v),
            Ok(_) => return Err(PdmError::DegeneratePath(l)),
            Err(e) => {
                log::warn!("MMSE covariance for stream {l} not usable ({e}); using MRC");
                return Ok((mrc_combiners(geometry)?, true));
            }
        }
    }
    Ok((normalized(&combiners)?, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerKind {
    Mrc,
    Mmse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDesign {
    pub precoders: Vec<ComplexVector>,
    pub combiners: Vec<ComplexVector>,
    pub powers: Vec<f64>,
    /// Sampling lag of each stream's combiner.
    pub delays: Vec<usize>,
    pub kind: CombinerKind,
    /// MMSE requested but MRC used.
    pub fallback: bool,
}

impl LinkDesign {
    pub fn validate(&self) -> Result<(), PdmError> {
        let l = self.precoders.len();
        if l == 0 || self.combiners.len() != l || self.powers.len() != l || self.delays.len() != l {
            return Err(PdmError::InvalidDesign(
                "per-stream vectors must all have the same length".into(),
            ));
        }
        for v in self.precoders.iter().chain(&self.combiners) {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(PdmError::InvalidDesign(format!(
                    "beamformer norm {} is not 1",
                    v.norm()
                )));
            }
        }
        if self.powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(PdmError::InvalidDesign("powers must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Water-filled powers over the stream gains `|alpha_l|^2 A_R A_T`.
pub fn pdm_powers(geometry: &PdmGeometry, power: f64, noise: f64) -> Result<Vec<f64>, PdmError> {
    Ok(water_fill(&geometry.stream_gains(), power, noise)?.powers)
}

/// MRT precoding, water-filled powers and the requested combiner.
pub fn design_link(geometry: &PdmGeometry, kind: CombinerKind, power: f64, noise: f64) -> Result<LinkDesign, PdmError> {
    let precoders = mrt_precoders(geometry)?;
    let powers = pdm_powers(geometry, power, noise)?;
    let (combiners, fallback) = match kind {
        CombinerKind::Mrc => (mrc_combiners(geometry)?, false),
        CombinerKind::Mmse => mmse_combiners(geometry, &precoders, &powers, noise)?,
    };
    Ok(LinkDesign {
        precoders,
        combiners,
        powers,
        delays: geometry.delays.clone(),
        kind,
        fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamSinr {
    pub desired: f64,
    pub isi: f64,
    pub inter_stream: f64,
    pub noise: f64,
    pub sinr: f64,
}

impl StreamSinr {
    fn new(desired: f64, isi: f64, inter_stream: f64, noise: f64) -> Self {
        let impairment = isi + inter_stream + noise;
        let sinr = if desired == 0.0 {
            0.0
        } else if impairment == 0.0 {
            f64::INFINITY
        } else {
            desired / impairment
        };
        Self {
            desired,
            isi,
            inter_stream,
            noise,
            sinr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub streams: Vec<StreamSinr>,
}

impl SinrReport {
    pub fn sinr(&self) -> Vec<f64> {
        self.streams.iter().map(|s| s.sinr).collect()
    }

    /// `sum_l log2(1 + gamma_l)`, bps/Hz.
    pub fn rate(&self) -> f64 {
        self.streams.iter().map(|s| s.sinr.log2_1p()).sum()
    }
}

trait Log2OnePlus {
    fn log2_1p(self) -> f64;
}

impl Log2OnePlus for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() / std::f64::consts::LN_2
    }
}

/// Analytic per-stream SINR with every path treated as an independent
/// symbol stream (distinct delays).
pub fn pdm_sinr(design: &LinkDesign, geometry: &PdmGeometry, noise: f64) -> Result<SinrReport, PdmError> {
    design.validate()?;
    if design.precoders.len() != geometry.paths() {
        return Err(PdmError::InvalidDesign(
            "design and geometry disagree on the path count".into(),
        ));
    }
    let coupling = transmit_coupling(geometry, &design.precoders);
    let paths = geometry.paths();
    let streams = (0..paths)
        .map(|l| {
            let v = &design.combiners[l];
            let rx: Vec<f64> = geometry.rx.iter().map(|a| v.dotc(a).norm_sqr()).collect();
            let term = |k: usize, stream: usize| {
                design.powers[stream] * geometry.gains[k].norm_sqr() * rx[k] * coupling[k][stream]
            };
            let desired = term(l, l);
            // The ISI power scales with p_l (stream l leaking through paths k != l).
            let isi = (0..paths).filter(|&k| k != l).map(|k| term(k, l)).sum();
            let inter = (0..paths)
                .filter(|&s| s != l)
                .flat_map(|s| (0..paths).map(move |k| (k, s)))
                .map(|(k, s)| term(k, s))
                .sum();
            StreamSinr::new(desired, isi, inter, noise * v.norm_squared())
        })
        .collect();
    Ok(SinrReport { streams })
}

/// Transmit and receive inter-path contamination coefficients,
/// `rho^{ll'} = |a_l^H a_l'|^2 / A^2` over the supports.
#[derive(Debug, Clone, PartialEq)]
pub struct IpcMatrix {
    pub tx: nalgebra::DMatrix<f64>,
    pub rx: nalgebra::DMatrix<f64>,
}

pub fn ipc_coefficients(geometry: &PdmGeometry) -> IpcMatrix {
    let build = |vectors: &[ComplexVector], aperture: f64| {
        let n = vectors.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            vectors[i].dotc(&vectors[j]).norm_sqr() / (aperture * aperture)
        })
    };
    IpcMatrix {
        tx: build(&geometry.tx, geometry.tx_aperture),
        rx: build(&geometry.rx, geometry.rx_aperture),
    }
}

fn ipc_sinr(
    geometry: &PdmGeometry,
    ipc: &IpcMatrix,
    powers: &[f64],
    noise: f64,
    keep: impl Fn(usize, usize, usize) -> bool,
) -> Vec<f64> {
    let paths = geometry.paths();
    // Self-contamination is 1 under the ||a||^2 = A normalisation.
    let rho = |m: &nalgebra::DMatrix<f64>, i: usize, j: usize| if i == j { 1.0 } else { m[(i, j)] };
    let g = |k: usize| geometry.gains[k].norm_sqr();
    (0..paths)
        .map(|l| {
            let isi: f64 = (0..paths)
                .filter(|&k| k != l)
                .map(|k| powers[l] * g(k) * rho(&ipc.rx, l, k) * rho(&ipc.tx, k, l))
                .sum();
            let mut inter = 0.0;
            for s in (0..paths).filter(|&s| s != l) {
                for k in (0..paths).filter(|&k| keep(l, s, k)) {
                    inter += powers[s] * g(k) * rho(&ipc.rx, l, k) * rho(&ipc.tx, k, s);
                }
            }
            powers[l] * g(l) / (isi + inter + noise / (geometry.rx_aperture * geometry.tx_aperture))
        })
        .collect()
}

/// MRC SINR written through the IPC coefficients.
pub fn mrc_sinr_ipc(geometry: &PdmGeometry, ipc: &IpcMatrix, powers: &[f64], noise: f64) -> Vec<f64> {
    ipc_sinr(geometry, ipc, powers, noise, |_, _, _| true)
}

/// Diagnostic: [`mrc_sinr_ipc`] keeping only the inter-stream terms whose
/// path is the desired one or the interfering stream's own path.
pub fn mrc_sinr_two_term(geometry: &PdmGeometry, ipc: &IpcMatrix, powers: &[f64], noise: f64) -> Vec<f64> {
    ipc_sinr(geometry, ipc, powers, noise, |l, s, k| k == l || k == s)
}

/// `y[n] = sum_t H_t x[n - d_t]`, with `x` zero before the first sample.
pub fn propagate(channel: &TappedChannel, input: &[ComplexVector]) -> Vec<ComplexVector> {
    let rows = channel.rows().len();
    let mut out = vec![ComplexVector::zeros(rows); input.len()];
    for tap in channel.taps() {
        for n in tap.delay..input.len() {
            out[n].gemv(
                Complex64::new(1.0, 0.0),
                &tap.matrix,
                &input[n - tap.delay],
                Complex64::new(1.0, 0.0),
            );
        }
    }
    out
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// Monte Carlo estimate of the per-stream powers through `channel`.
///
/// Each stream is propagated on its own; combiner `l` samples the output at
/// lag `delays[l]`. The desired power is the part of stream `l`'s combiner
/// output correlated with `s_l`, the ISI is the rest of that output, and the
/// inter-stream term is the combined output of all other streams. A zero
/// `noise` runs noise-free.
pub fn simulate_symbols<R: Rng + ?Sized>(
    design: &LinkDesign,
    channel: &TappedChannel,
    n_symbols: usize,
    rng: &mut R,
    noise: f64,
) -> Result<SinrReport, PdmError> {
    design.validate()?;
    if n_symbols < MIN_SYMBOLS {
        return Err(PdmError::TooFewSymbols {
            requested: n_symbols,
            minimum: MIN_SYMBOLS,
        });
    }
    let (rows, cols) = (channel.rows().len(), channel.cols().len());
    if design.precoders[0].len() != cols || design.combiners[0].len() != rows {
        return Err(PdmError::InvalidDesign(
            "beamformer sizes do not match the channel".into(),
        ));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(PdmError::InvalidDesign(format!(
            "noise power must be non-negative, got {noise}"
        )));
    }
    let streams = design.precoders.len();
    let lag = design
        .delays
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max(channel.max_delay());
    let total = n_symbols + 2 * lag;
    let window = lag..lag + n_symbols;

    let symbols: Vec<Vec<Complex64>> = (0..streams)
        .map(|_| (0..total).map(|_| complex_gaussian(rng, 1.0)).collect())
        .collect();
    let noise_samples: Vec<ComplexVector> = if noise > 0.0 {
        (0..total)
            .map(|_| ComplexVector::from_fn(rows, |_, _| complex_gaussian(rng, noise)))
            .collect()
    } else {
        Vec::new()
    };

    // Output of every combiner for every stream alone: combined[l][s][j].
    let mut combined = vec![vec![Vec::with_capacity(n_symbols); streams]; streams];
    for s in 0..streams {
        let amplitude = Complex64::new(design.powers[s].sqrt(), 0.0);
        let input: Vec<ComplexVector> = symbols[s]
            .iter()
            .map(|&x| &design.precoders[s] * (x * amplitude))
            .collect();
        let output = propagate(channel, &input);
        for l in 0..streams {
            let v = &design.combiners[l];
            combined[l][s] = window.clone().map(|j| v.dotc(&output[j + design.delays[l]])).collect();
        }
    }

    let count = n_symbols as f64;
    let reports = (0..streams)
        .map(|l| {
            let own = &combined[l][l];
            let reference = &symbols[l][window.clone()];
            let energy: f64 = reference.iter().map(|x| x.norm_sqr()).sum();
            let gain = own.iter().zip(reference).map(|(z, x)| z * x.conj()).sum::<Complex64>() / energy;
            let desired = gain.norm_sqr() * energy / count;
            let mut isi = own
                .iter()
                .zip(reference)
                .map(|(z, x)| (z - gain * x).norm_sqr())
                .sum::<f64>()
                / count;
            let mut inter = (0..n_symbols)
                .map(|j| {
                    (0..streams)
                        .filter(|&s| s != l)
                        .map(|s| combined[l][s][j])
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum::<f64>()
                / count;
            let noise_power = if noise > 0.0 {
                let v = &design.combiners[l];
                window
                    .clone()
                    .map(|j| v.dotc(&noise_samples[j + design.delays[l]]).norm_sqr())
                    .sum::<f64>()
                    / count
            } else {
                if isi <= NUMERICAL_FLOOR * desired {
                    isi = 0.0;
                }
                if inter <= NUMERICAL_FLOOR * desired {
                    inter = 0.0;
                }
                0.0
            };
            StreamSinr::new(desired, isi, inter, noise_power)
        })
        .collect();
    Ok(SinrReport { streams: reports })
}

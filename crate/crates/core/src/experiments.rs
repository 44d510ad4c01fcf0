//! Monte Carlo harness: scenario presets, key=value configuration, parallel
//! deterministic trials and CSV output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::array_geometry::{GeometryError, LensArrayConfig, UpaConfig};
use crate::benchmark_upa::{
    ofdm_capacity_from_gains, ofdm_power_gains, power_select_antennas, BenchmarkError, OfdmConfig,
};
use crate::channel_model::{
    all_positions, sample_paths, tapped_channel, AngleRule, ChannelError, ChannelStats, PathSet, TappedChannel,
};
use crate::numerics::{significant_power_gains, water_filled_rate, NumericsError};
use crate::opdm::{opdm_capacity, opdm_decompose, OpdmError};
use crate::path_grouping::{group_channels, group_paths, grouped_capacity, separation_of, GroupingError};
use crate::pdm::{design_link, pdm_sinr, CombinerKind, PdmError, PdmGeometry};
use crate::selection::support_sets;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SIM_THREADS";

pub const CSV_HEADER: [&str; 6] = ["scheme", "snr_db", "se_bpshz", "stderr", "trials", "flags"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trial {trial}: {message}")]
    Trial { trial: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl ExperimentError {
    /// True for errors caused by the configuration rather than the environment.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Parse { .. })
    }
}

impl From<ChannelError> for ExperimentError {
    fn from(e: ChannelError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<GeometryError> for ExperimentError {
    fn from(e: GeometryError) -> Self {
        Self::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Opdm,
    PdmMrc,
    PdmMmse,
    PdmGrouping,
    UpaEigenmode,
    UpaOfdm,
    UpaOfdmSelection,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Opdm,
        Scheme::PdmMrc,
        Scheme::PdmMmse,
        Scheme::PdmGrouping,
        Scheme::UpaEigenmode,
        Scheme::UpaOfdm,
        Scheme::UpaOfdmSelection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Opdm => "OPDM",
            Scheme::PdmMrc => "PDM-MRC",
            Scheme::PdmMmse => "PDM-MMSE",
            Scheme::PdmGrouping => "PDM-grouping",
            Scheme::UpaEigenmode => "UPA-eigenmode",
            Scheme::UpaOfdm => "UPA-OFDM",
            Scheme::UpaOfdmSelection => "UPA-OFDM-selection",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ExperimentError::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Fig5,
    Fig6,
    Fig9,
    Fig10,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Fig5,
        Scenario::Fig6,
        Scenario::Fig9,
        Scenario::Fig10,
        Scenario::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig5 => "fig5-narrowband-ideal",
            Scenario::Fig6 => "fig6-wideband-ideal",
            Scenario::Fig9 => "fig9-wideband-spread150",
            Scenario::Fig10 => "fig10-wideband-spread10",
            Scenario::Custom => "custom",
        }
    }

    fn short(self) -> &'static str {
        self.name().split('-').next().unwrap_or("custom")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ExperimentError;

    /// Accepts the full name or its prefix before the first dash (`fig9`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Scenario::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.short().eq_ignore_ascii_case(s))
            .ok_or_else(|| ExperimentError::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub tx_aperture: f64,
    pub rx_aperture: f64,
    pub tx_dim: f64,
    pub rx_dim: f64,
    pub paths: usize,
    pub stats: ChannelStats,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub delta: u32,
    pub rx_rf: usize,
    pub tx_rf: usize,
    pub subcarriers: usize,
    pub cp_samples: usize,
    pub seed: u64,
}

/// Keys a preset leaves open; everything else is fixed by the scenario.
const PRESET_KEYS: [&str; 5] = ["scenario", "seed", "trials", "snr_db", "schemes"];

const ALL_KEYS: [&str; 25] = [
    "scenario",
    "seed",
    "trials",
    "snr_db",
    "schemes",
    "tx_aperture",
    "rx_aperture",
    "tx_dim",
    "rx_dim",
    "paths",
    "delta",
    "rx_rf",
    "tx_rf",
    "subcarriers",
    "cp_samples",
    "carrier_hz",
    "c1",
    "c2",
    "shadowing_db",
    "r_tau",
    "zeta_db",
    "distance_m",
    "bandwidth_hz",
    "noise_dbm_hz",
    "max_delay_ns",
];

const ANGLE_KEYS: [&str; 2] = ["aoa", "aod"];

fn default_snr_grid() -> Vec<f64> {
    (0..9).map(|i| -10.0 + 5.0 * i as f64).collect()
}

impl ExperimentConfig {
    pub const DEFAULT_TRIALS: usize = 500;

    pub fn preset(scenario: Scenario) -> Self {
        let ideal = AngleRule::Fixed(vec![0.0, 0.2, -0.2]);
        let base = Self {
            scenario,
            tx_aperture: 20.0,
            rx_aperture: 20.0,
            tx_dim: 10.0,
            rx_dim: 10.0,
            paths: 3,
            stats: ChannelStats::default(),
            schemes: Vec::new(),
            snr_db: default_snr_grid(),
            trials: Self::DEFAULT_TRIALS,
            delta: 1,
            rx_rf: 6,
            tx_rf: 6,
            subcarriers: 512,
            cp_samples: 50,
            seed: 0,
        };
        let wide = |spread_deg: f64| Self {
            tx_aperture: 100.0,
            rx_aperture: 50.0,
            tx_dim: 20.0,
            rx_dim: 10.0,
            stats: ChannelStats {
                aoa: AngleRule::EqualSpread(spread_deg.to_radians()),
                aod: AngleRule::fixed_degrees(&[-15.0, 10.0, 45.0]),
                ..ChannelStats::default()
            },
            schemes: vec![
                Scheme::PdmMrc,
                Scheme::PdmMmse,
                Scheme::PdmGrouping,
                Scheme::UpaOfdmSelection,
            ],
            ..base.clone()
        };
        match scenario {
            Scenario::Fig5 => Self {
                stats: ChannelStats {
                    max_delay_s: 0.0,
                    aoa: ideal.clone(),
                    aod: ideal,
                    ..ChannelStats::default()
                },
                schemes: vec![Scheme::Opdm, Scheme::UpaEigenmode],
                ..base
            },
            Scenario::Fig6 => Self {
                stats: ChannelStats {
                    aoa: ideal.clone(),
                    aod: ideal,
                    ..ChannelStats::default()
                },
                schemes: vec![Scheme::Opdm, Scheme::UpaOfdm],
                ..base
            },
            Scenario::Fig9 => wide(150.0),
            Scenario::Fig10 => wide(10.0),
            Scenario::Custom => Self {
                stats: ChannelStats {
                    aoa: AngleRule::UniformSpread(PI),
                    aod: AngleRule::UniformSpread(PI),
                    ..ChannelStats::default()
                },
                schemes: vec![
                    Scheme::PdmMrc,
                    Scheme::PdmMmse,
                    Scheme::PdmGrouping,
                    Scheme::UpaOfdmSelection,
                ],
                ..base
            },
        }
    }

    /// Parses flat `key = value` text (`#` starts a comment). `overrides` are
    /// applied after the file and take precedence. The scenario is resolved
    /// first; presets accept only `seed`, `trials`, `snr_db` and `schemes`.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ExperimentError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ExperimentError::Parse {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut seen = BTreeMap::new();
        for (line, k, _) in &entries {
            if let Some(first) = seen.insert(k.clone(), *line) {
                return Err(ExperimentError::Parse {
                    line: *line,
                    message: format!("duplicate key '{k}' (first on line {first})"),
                });
            }
        }
        entries.extend(overrides.iter().map(|(k, v)| (0, k.clone(), v.clone())));

        let scenario = match entries.iter().rev().find(|(_, k, _)| k == "scenario") {
            Some((_, _, v)) => v.parse()?,
            None => Scenario::Custom,
        };
        let mut cfg = Self::preset(scenario);
        for (line, key, value) in &entries {
            cfg.apply(key, value).map_err(|e| match e {
                ExperimentError::Config(message) if *line > 0 => ExperimentError::Parse { line: *line, message },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        if !ALL_KEYS.contains(&key) && !ANGLE_KEYS.contains(&key) {
            return Err(ExperimentError::Config(format!("unknown key '{key}'")));
        }
        if self.scenario != Scenario::Custom && !PRESET_KEYS.contains(&key) {
            return Err(ExperimentError::Config(format!(
                "key '{key}' is fixed by scenario {}",
                self.scenario
            )));
        }
        let s = &mut self.stats;
        match key {
            "scenario" => {}
            "seed" => self.seed = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "snr_db" => self.snr_db = list(key, value)?,
            "schemes" => {
                self.schemes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()?
            }
            "tx_aperture" => self.tx_aperture = num(key, value)?,
            "rx_aperture" => self.rx_aperture = num(key, value)?,
            "tx_dim" => self.tx_dim = num(key, value)?,
            "rx_dim" => self.rx_dim = num(key, value)?,
            "paths" => self.paths = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "rx_rf" => self.rx_rf = num(key, value)?,
            "tx_rf" => self.tx_rf = num(key, value)?,
            "subcarriers" => self.subcarriers = num(key, value)?,
            "cp_samples" => self.cp_samples = num(key, value)?,
            "carrier_hz" => s.carrier_hz = num(key, value)?,
            "c1" => s.c1 = num(key, value)?,
            "c2" => s.c2 = num(key, value)?,
            "shadowing_db" => s.shadowing_db = num(key, value)?,
            "r_tau" => s.r_tau = num(key, value)?,
            "zeta_db" => s.zeta_db = num(key, value)?,
            "distance_m" => s.distance_m = num(key, value)?,
            "bandwidth_hz" => s.bandwidth_hz = num(key, value)?,
            "noise_dbm_hz" => s.noise_dbm_hz = num(key, value)?,
            "max_delay_ns" => s.max_delay_s = num::<f64>(key, value)? * 1e-9,
            "aoa" => s.aoa = angle_rule(key, value)?,
            "aod" => s.aod = angle_rule(key, value)?,
            _ => unreachable!("key list checked above"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.delta == 0 {
            return fail("delta must be at least 1".into());
        }
        if self.rx_rf == 0 || self.tx_rf == 0 {
            return fail("RF budgets must be at least 1".into());
        }
        if let Some(bad) = self.snr_db.iter().find(|v| !v.is_finite()) {
            return fail(format!("SNR {bad} is not finite"));
        }
        self.stats.validate(self.paths)?;
        let (tx, rx) = self.lens_arrays()?;
        let (utx, urx) = (UpaConfig::matching(&tx)?, UpaConfig::matching(&rx)?);
        if self.schemes.contains(&Scheme::UpaOfdmSelection)
            && (self.rx_rf > urx.grid().0 * urx.grid().1 || self.tx_rf > utx.grid().0 * utx.grid().1)
        {
            return fail("RF budget exceeds the UPA size".into());
        }
        let ofdm = self.ofdm()?;
        let max_tap = (self.stats.max_delay_s * self.stats.bandwidth_hz).round() as usize;
        let wideband_upa = self
            .schemes
            .iter()
            .any(|s| matches!(s, Scheme::UpaOfdm | Scheme::UpaOfdmSelection));
        if wideband_upa && max_tap >= ofdm.subcarriers() {
            return fail(format!(
                "maximum delay of {max_tap} samples does not fit in {} subcarriers",
                ofdm.subcarriers()
            ));
        }
        if wideband_upa && ofdm.cp_samples() < max_tap {
            return fail(format!(
                "CP of {} samples is shorter than the maximum delay of {max_tap}",
                ofdm.cp_samples()
            ));
        }
        Ok(())
    }

    pub fn lens_arrays(&self) -> Result<(LensArrayConfig, LensArrayConfig), ExperimentError> {
        Ok((
            LensArrayConfig::new(self.tx_aperture, self.tx_dim)?,
            LensArrayConfig::new(self.rx_aperture, self.rx_dim)?,
        ))
    }

    pub fn ofdm(&self) -> Result<OfdmConfig, ExperimentError> {
        OfdmConfig::new(self.subcarriers, self.cp_samples, self.stats.bandwidth_hz)
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .trim()
        .parse()
        .map_err(|_| ExperimentError::Config(format!("invalid value '{value}' for '{key}'")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, ExperimentError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| num(key, v))
        .collect()
}

/// `uniform:<deg>`, `equal:<deg>`, `fixed:<deg>,...` or `spatial:<s>,...`.
fn angle_rule(key: &str, value: &str) -> Result<AngleRule, ExperimentError> {
    let (kind, args) = value
        .split_once(':')
        .ok_or_else(|| ExperimentError::Config(format!("'{key}' expects kind:arguments, got '{value}'")))?;
    match kind.trim() {
        "uniform" => Ok(AngleRule::UniformSpread(num::<f64>(key, args)?.to_radians())),
        "equal" => Ok(AngleRule::EqualSpread(num::<f64>(key, args)?.to_radians())),
        "fixed" => Ok(AngleRule::fixed_degrees(&list(key, args)?)),
        "spatial" => Ok(AngleRule::Fixed(list(key, args)?)),
        other => Err(ExperimentError::Config(format!(
            "unknown angle rule '{other}' for '{key}'"
        ))),
    }
}

/// Per-scheme outcome of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeOutcome {
    /// Spectral efficiency per SNR point, bps/Hz.
    Rates { rates: Vec<f64>, fallback: bool },
    /// Scheme does not apply to this realization.
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub paths: PathSet,
    pub outcomes: Vec<(Scheme, SchemeOutcome)>,
}

impl TrialResult {
    pub fn rates(&self, scheme: Scheme) -> Option<&[f64]> {
        self.outcomes
            .iter()
            .find(|(s, _)| *s == scheme)
            .and_then(|(_, o)| match o {
                SchemeOutcome::Rates { rates, .. } => Some(rates.as_slice()),
                SchemeOutcome::Skipped(_) => None,
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RowFlags {
    pub skipped: usize,
    pub fallback: usize,
}

impl fmt::Display for RowFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.skipped > 0 {
            parts.push(format!("skipped={}", self.skipped));
        }
        if self.fallback > 0 {
            parts.push(format!("fallback={}", self.fallback));
        }
        f.write_str(&parts.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub snr_db: f64,
    /// Mean spectral efficiency over the trials that ran, bps/Hz.
    pub se: f64,
    pub stderr: f64,
    pub trials: usize,
    pub flags: RowFlags,
}

/// Per-trial RNG: the seed's ChaCha8 stream number `trial`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

struct Arrays {
    tx: LensArrayConfig,
    rx: LensArrayConfig,
    upa_tx: UpaConfig,
    upa_rx: UpaConfig,
    ofdm: OfdmConfig,
}

impl Arrays {
    fn new(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let (tx, rx) = cfg.lens_arrays()?;
        Ok(Self {
            upa_tx: UpaConfig::matching(&tx)?,
            upa_rx: UpaConfig::matching(&rx)?,
            tx,
            rx,
            ofdm: cfg.ofdm()?,
        })
    }
}

fn trial_error(trial: usize, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Trial {
        trial,
        message: e.to_string(),
    }
}

/// Evaluates every configured scheme on trial `trial`'s realization.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<TrialResult, ExperimentError> {
    cfg.validate()?;
    evaluate_trial(cfg, &Arrays::new(cfg)?, trial)
}

fn evaluate_trial(cfg: &ExperimentConfig, arrays: &Arrays, trial: usize) -> Result<TrialResult, ExperimentError> {
    let mut rng = trial_rng(cfg.seed, trial);
    let paths = sample_paths(&cfg.stats, cfg.paths, &mut rng).map_err(|e| trial_error(trial, e))?;
    let noise = cfg.stats.noise_power();
    let powers: Vec<f64> = cfg.snr_db.iter().map(|&s| cfg.stats.transmit_power(s)).collect();
    let rate = cfg.stats.bandwidth_hz;

    let mut upa_full: Option<TappedChannel> = None;
    let mut outcomes = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let outcome = match scheme {
            Scheme::Opdm => match opdm_decompose(&paths, &arrays.tx, &arrays.rx, rate) {
                Ok(ch) => SchemeOutcome::Rates {
                    rates: powers
                        .iter()
                        .map(|&p| opdm_capacity(&ch, p, noise))
                        .collect::<Result<_, OpdmError>>()
                        .map_err(|e| trial_error(trial, e))?,
                    fallback: false,
                },
                Err(e @ (OpdmError::NonIdeal { .. } | OpdmError::DuplicateFocus { .. })) => {
                    SchemeOutcome::Skipped(e.to_string())
                }
                Err(e) => return Err(trial_error(trial, e)),
            },
            Scheme::PdmMrc | Scheme::PdmMmse => pdm_outcome(&paths, cfg, arrays, scheme, &powers, noise, trial)?,
            Scheme::PdmGrouping => {
                let sets = support_sets(&paths, &arrays.tx, &arrays.rx, cfg.delta);
                match group_paths(&sets, separation_of(&sets)) {
                    Ok(partition) => {
                        let channels = group_channels(&paths, &sets, &partition, &arrays.tx, &arrays.rx);
                        SchemeOutcome::Rates {
                            rates: powers
                                .iter()
                                .map(|&p| grouped_capacity(&channels, p, noise))
                                .collect::<Result<_, GroupingError>>()
                                .map_err(|e| trial_error(trial, e))?,
                            fallback: false,
                        }
                    }
                    Err(GroupingError::NotSeparated) => {
                        match pdm_outcome(&paths, cfg, arrays, Scheme::PdmMmse, &powers, noise, trial)? {
                            SchemeOutcome::Rates { rates, .. } => SchemeOutcome::Rates { rates, fallback: true },
                            skipped => skipped,
                        }
                    }
                    Err(e) => return Err(trial_error(trial, e)),
                }
            }
            Scheme::UpaEigenmode => {
                let n = (
                    arrays.upa_rx.grid().0 * arrays.upa_rx.grid().1,
                    arrays.upa_tx.grid().0 * arrays.upa_tx.grid().1,
                );
                let flat = tapped_channel(
                    &paths.narrowband(),
                    &arrays.upa_tx,
                    &arrays.upa_rx,
                    rate,
                    &all_positions(n.0),
                    &all_positions(n.1),
                )
                .map_err(|e| trial_error(trial, e))?;
                let gains = ofdm_power_gains(&flat, 1).map_err(|e| trial_error(trial, e))?;
                let s: Vec<f64> = gains[0].iter().map(|g| g.max(0.0).sqrt()).collect();
                let gains = significant_power_gains(&s);
                SchemeOutcome::Rates {
                    rates: powers
                        .iter()
                        .map(|&p| {
                            if gains.is_empty() {
                                Ok(0.0)
                            } else {
                                water_filled_rate(&gains, p, noise)
                            }
                        })
                        .collect::<Result<_, NumericsError>>()
                        .map_err(|e| trial_error(trial, e))?,
                    fallback: false,
                }
            }
            Scheme::UpaOfdm | Scheme::UpaOfdmSelection => {
                if upa_full.is_none() {
                    let n = (
                        arrays.upa_rx.grid().0 * arrays.upa_rx.grid().1,
                        arrays.upa_tx.grid().0 * arrays.upa_tx.grid().1,
                    );
                    upa_full = Some(
                        tapped_channel(
                            &paths,
                            &arrays.upa_tx,
                            &arrays.upa_rx,
                            rate,
                            &all_positions(n.0),
                            &all_positions(n.1),
                        )
                        .map_err(|e| trial_error(trial, e))?,
                    );
                }
                let full = upa_full.as_ref().expect("built above");
                let channel = if scheme == Scheme::UpaOfdmSelection {
                    let (r, c) =
                        power_select_antennas(full, cfg.rx_rf, cfg.tx_rf).map_err(|e| trial_error(trial, e))?;
                    full.restrict(&r, &c).map_err(|e| trial_error(trial, e))?
                } else {
                    full.clone()
                };
                let gains = ofdm_power_gains(&channel, arrays.ofdm.subcarriers()).map_err(|e| trial_error(trial, e))?;
                SchemeOutcome::Rates {
                    rates: powers
                        .iter()
                        .map(|&p| ofdm_capacity_from_gains(&gains, p, noise, &arrays.ofdm))
                        .collect::<Result<_, BenchmarkError>>()
                        .map_err(|e| trial_error(trial, e))?,
                    fallback: false,
                }
            }
        };
        outcomes.push((scheme, outcome));
    }
    Ok(TrialResult { trial, paths, outcomes })
}

fn pdm_outcome(
    paths: &PathSet,
    cfg: &ExperimentConfig,
    arrays: &Arrays,
    scheme: Scheme,
    powers: &[f64],
    noise: f64,
    trial: usize,
) -> Result<SchemeOutcome, ExperimentError> {
    let kind = if scheme == Scheme::PdmMrc {
        CombinerKind::Mrc
    } else {
        CombinerKind::Mmse
    };
    let sets = support_sets(paths, &arrays.tx, &arrays.rx, cfg.delta);
    let geometry = PdmGeometry::new(paths, &sets, &arrays.tx, &arrays.rx, cfg.stats.bandwidth_hz);
    let mut rates = Vec::with_capacity(powers.len());
    let mut fallback = false;
    for &p in powers {
        let design = match design_link(&geometry, kind, p, noise) {
            Ok(d) => d,
            Err(e @ PdmError::DegeneratePath(_)) => return Ok(SchemeOutcome::Skipped(e.to_string())),
            Err(e) => return Err(trial_error(trial, e)),
        };
        fallback |= design.fallback;
        rates.push(
            pdm_sinr(&design, &geometry, noise)
                .map_err(|e| trial_error(trial, e))?
                .rate(),
        );
    }
    Ok(SchemeOutcome::Rates { rates, fallback })
}

/// Worker count from `SIM_THREADS`, or `None` for the rayon default.
pub fn threads_from_env() -> Result<Option<usize>, ExperimentError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(ExperimentError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// All trials in trial order, on `workers` threads (`None`: `SIM_THREADS` or
/// the hardware default).
pub fn run_trials(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<TrialResult>, ExperimentError> {
    cfg.validate()?;
    let arrays = Arrays::new(cfg)?;
    let workers = match workers {
        Some(n) => Some(n),
        None => threads_from_env()?,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| evaluate_trial(cfg, &arrays, t))
            .collect()
    })
}

/// Mean and standard error per (scheme, SNR), schemes in configuration order.
pub fn summarize(cfg: &ExperimentConfig, trials: &[TrialResult]) -> Vec<ResultRow> {
    let mut rows = Vec::with_capacity(cfg.schemes.len() * cfg.snr_db.len());
    for (i, &scheme) in cfg.schemes.iter().enumerate() {
        let mut flags = RowFlags::default();
        let mut ran: Vec<&[f64]> = Vec::new();
        for t in trials {
            match &t.outcomes[i].1 {
                SchemeOutcome::Rates { rates, fallback } => {
                    ran.push(rates);
                    flags.fallback += usize::from(*fallback);
                }
                SchemeOutcome::Skipped(_) => flags.skipped += 1,
            }
        }
        for (k, &snr_db) in cfg.snr_db.iter().enumerate() {
            let n = ran.len();
            let (se, stderr) = if n == 0 {
                (f64::NAN, 0.0)
            } else {
                let mean = ran.iter().map(|r| r[k]).sum::<f64>() / n as f64;
                let stderr = if n > 1 {
                    let var = ran.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                (mean, stderr)
            };
            rows.push(ResultRow {
                scheme,
                snr_db,
                se,
                stderr,
                trials: n,
                flags,
            });
        }
    }
    rows
}

/// Runs the configured Monte Carlo experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    run_experiment_with(cfg, None)
}

pub fn run_experiment_with(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<ResultRow>, ExperimentError> {
    Ok(summarize(cfg, &run_trials(cfg, workers)?))
}

/// Writes rows as CSV with [`CSV_HEADER`].
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.snr_db.to_string(),
            format!("{:.6}", r.se),
            format!("{:.6}", r.stderr),
            r.trials.to_string(),
            r.flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment and writes the CSV to `path`.
pub fn sweep(cfg: &ExperimentConfig, path: &FsPath) -> Result<Vec<ResultRow>, ExperimentError> {
    sweep_with(cfg, path, None)
}

pub fn sweep_with(
    cfg: &ExperimentConfig,
    path: &FsPath,
    workers: Option<usize>,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let rows = run_experiment_with(cfg, workers)?;
    let file = std::fs::File::create(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(&rows, std::io::BufWriter::new(file)).map_err(|source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: Scenario, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            trials,
            seed: 3,
            ..ExperimentConfig::preset(scenario)
        }
    }

    #[test]
    fn presets_match_parameters() {
        let c = ExperimentConfig::preset(Scenario::Fig9);
        let (tx, rx) = c.lens_arrays().unwrap();
        assert_eq!((tx.element_count(), rx.element_count()), (41, 21));
        assert_eq!(UpaConfig::matching(&tx).unwrap().grid(), (40, 10));
        assert_eq!(UpaConfig::matching(&rx).unwrap().grid(), (20, 10));
        assert_eq!((c.rx_rf, c.tx_rf, c.delta), (6, 6, 1));
        assert_eq!(c.snr_db, vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        let f10 = ExperimentConfig::preset(Scenario::Fig10);
        assert_eq!(f10.stats.aoa, AngleRule::EqualSpread(10f64.to_radians()));
        let f5 = ExperimentConfig::preset(Scenario::Fig5);
        assert_eq!(f5.stats.max_delay_s, 0.0);
        assert_eq!(f5.schemes, vec![Scheme::Opdm, Scheme::UpaEigenmode]);
        for s in Scenario::ALL {
            ExperimentConfig::preset(s).validate().unwrap();
        }
    }

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("fig10".parse::<Scenario>().unwrap(), Scenario::Fig10);
        assert!("fig11".parse::<Scenario>().is_err());
    }

    #[test]
    fn parse_config_text() {
        let text =
            "# demo\nscenario = fig9\ntrials = 12   # short\nseed=7\nsnr_db = 0, 10\nschemes = PDM-MRC,PDM-MMSE\n";
        let c = ExperimentConfig::parse(text, &[("trials".into(), "4".into())]).unwrap();
        assert_eq!(c.scenario, Scenario::Fig9);
        assert_eq!((c.trials, c.seed), (4, 7));
        assert_eq!(c.snr_db, vec![0.0, 10.0]);
        assert_eq!(c.schemes, vec![Scheme::PdmMrc, Scheme::PdmMmse]);

        let custom = "tx_aperture = 40\ntx_dim = 10\naoa = equal:60\naod = fixed:-20,0,20\nmax_delay_ns = 40";
        let c = ExperimentConfig::parse(custom, &[]).unwrap();
        assert_eq!(c.scenario, Scenario::Custom);
        assert_eq!(c.tx_aperture, 40.0);
        assert_eq!(c.stats.aoa, AngleRule::EqualSpread(60f64.to_radians()));
        assert!((c.stats.max_delay_s - 40e-9).abs() < 1e-20);

        let err = |t: &str| ExperimentConfig::parse(t, &[]).unwrap_err();
        assert!(matches!(err("bogus = 1"), ExperimentError::Parse { line: 1, .. }));
        assert!(matches!(
            err("scenario = fig5\ntx_aperture = 5"),
            ExperimentError::Parse { line: 2, .. }
        ));
        assert!(matches!(err("trials = many"), ExperimentError::Parse { .. }));
        assert!(matches!(
            err("trials = 1\ntrials = 2"),
            ExperimentError::Parse { line: 2, .. }
        ));
        assert!(matches!(err("just text"), ExperimentError::Parse { .. }));
        assert!(err("trials = 0").is_config());
        assert!(err("schemes = PDM-ZF").is_config());
        assert!(err("cp_samples = 10").is_config());
    }

    #[test]
    fn empty_scheme_list_writes_header_only() {
        let cfg = ExperimentConfig {
            schemes: vec![],
            ..quick(Scenario::Fig5, 2)
        };
        let mut buf = Vec::new();
        write_csv(&run_experiment_with(&cfg, Some(1)).unwrap(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scheme,snr_db,se_bpshz,stderr,trials,flags\n"
        );
    }

    #[test]
    fn fig5_row_count_and_flags() {
        let rows = run_experiment_with(&quick(Scenario::Fig5, 10), Some(2)).unwrap();
        assert_eq!(rows.len(), 2 * 9);
        assert!(rows
            .iter()
            .all(|r| r.trials == 10 && r.flags == RowFlags::default() && r.stderr >= 0.0));
    }

    #[test]
    fn opdm_skips_non_ideal_realizations() {
        let cfg = ExperimentConfig {
            schemes: vec![Scheme::Opdm, Scheme::PdmMrc],
            trials: 4,
            ..ExperimentConfig::preset(Scenario::Custom)
        };
        let rows = run_experiment_with(&cfg, Some(1)).unwrap();
        assert_eq!(rows[0].flags.skipped, 4);
        assert_eq!(rows[0].trials, 0);
        assert!(rows[0].se.is_nan());
        assert_eq!(rows[9].trials, 4);
    }

    #[test]
    fn deterministic_across_workers() {
        let cfg = quick(Scenario::Fig10, 6);
        let a = run_experiment_with(&cfg, Some(1)).unwrap();
        let b = run_experiment_with(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
        let other = run_experiment_with(&ExperimentConfig { seed: 4, ..cfg }, Some(1)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn trial_streams_are_distinct() {
        use rand::RngCore;
        let a = trial_rng(1, 0).next_u64();
        assert_eq!(a, trial_rng(1, 0).next_u64());
        assert_ne!(a, trial_rng(1, 1).next_u64());
        assert_ne!(a, trial_rng(2, 0).next_u64());
    }

    #[test]
    fn grouping_falls_back_when_neither_side_separated() {
        let mut cfg = quick(Scenario::Custom, 1);
        cfg.stats.aoa = AngleRule::Fixed(vec![0.0, 0.05, -0.05]);
        cfg.stats.aod = AngleRule::Fixed(vec![0.0, 0.05, -0.05]);
        cfg.schemes = vec![Scheme::PdmGrouping, Scheme::PdmMmse];
        let t = run_trial(&cfg, 0).unwrap();
        assert!(matches!(t.outcomes[0].1, SchemeOutcome::Rates { fallback: true, .. }));
        assert_eq!(t.rates(Scheme::PdmGrouping), t.rates(Scheme::PdmMmse));
    }

    #[test]
    fn monotone_in_snr() {
        for scenario in [Scenario::Fig6, Scenario::Fig9] {
            let rows = run_experiment_with(&quick(scenario, 8), None).unwrap();
            for w in rows.windows(2).filter(|w| w[0].scheme == w[1].scheme) {
                assert!(w[1].se >= w[0].se - 1e-12, "{:?}", w);
            }
        }
    }
}

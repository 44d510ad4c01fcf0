use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lensmimo::array_geometry::lens_response;
use lensmimo::channel_model::sample_paths;
use lensmimo::experiments::{run_experiment, sweep, trial_rng, write_csv};
use lensmimo::{ExperimentConfig, ExperimentError};

/// Lens-array mmWave MIMO link simulator.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lens array response at one angle of arrival, as CSV `m,real,imag`.
    Response {
        #[command(flatten)]
        common: Common,
        /// Array to evaluate.
        #[arg(long, value_enum, default_value_t = Side::Rx)]
        side: Side,
        /// Azimuth angle in degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        angle_deg: f64,
    },
    /// One channel realization, one CSV row per path.
    Channel {
        #[command(flatten)]
        common: Common,
        /// Trial index selecting the realization.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run the Monte Carlo experiment and print the result CSV.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run the Monte Carlo experiment and write the result CSV to `--out`.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Side {
    Rx,
    Tx,
}

#[derive(Debug, Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset (overrides the file).
    #[arg(long)]
    scenario: Option<String>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Output path; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            e if e.is_config() => Failure::Config(e.to_string()),
            e @ (ExperimentError::Io { .. } | ExperimentError::Csv { .. }) => Failure::Io(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

fn io_failure(path: Option<&Path>, e: impl std::fmt::Display) -> Failure {
    match path {
        Some(p) => Failure::Io(format!("{}: {e}", p.display())),
        None => Failure::Io(e.to_string()),
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path).map_err(|e| io_failure(Some(path), e))?,
            None => String::new(),
        };
        let mut overrides = Vec::new();
        if let Some(s) = &self.scenario {
            overrides.push(("scenario".to_string(), s.clone()));
        }
        if let Some(s) = self.seed {
            overrides.push(("seed".to_string(), s.to_string()));
        }
        if let Some(t) = self.trials {
            overrides.push(("trials".to_string(), t.to_string()));
        }
        ExperimentConfig::parse(&text, &overrides).map_err(|e| match &self.config {
            Some(path) if e.is_config() => Failure::Config(format!("{}: {e}", path.display())),
            _ => e.into(),
        })
    }

    fn writer(&self) -> Result<Box<dyn Write>, Failure> {
        match &self.out {
            Some(path) => {
                let file = File::create(path).map_err(|e| io_failure(Some(path), e))?;
                Ok(Box::new(BufWriter::new(file)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }
}

fn write_rows(common: &Common, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), Failure> {
    let out = common.out.as_deref();
    let mut w = csv::Writer::from_writer(common.writer()?);
    w.write_record(header).map_err(|e| io_failure(out, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_failure(out, e))?;
    }
    w.flush().map_err(|e| io_failure(out, e))
}

fn response(common: &Common, side: Side, angle_deg: f64) -> Result<(), Failure> {
    let cfg = common.load()?;
    let (tx, rx) = cfg.lens_arrays()?;
    let array = match side {
        Side::Rx => rx,
        Side::Tx => tx,
    };
    let a = lens_response(&array, angle_deg.to_radians()).map_err(|e| Failure::Config(e.to_string()))?;
    let rows = a
        .iter()
        .enumerate()
        .map(|(pos, z)| vec![array.index_at(pos).to_string(), z.re.to_string(), z.im.to_string()])
        .collect();
    write_rows(common, &["m", "real", "imag"], rows)
}

fn channel(common: &Common, trial: usize) -> Result<(), Failure> {
    let cfg = common.load()?;
    let (tx, rx) = cfg.lens_arrays()?;
    let paths = sample_paths(&cfg.stats, cfg.paths, &mut trial_rng(cfg.seed, trial))
        .map_err(|e| Failure::Config(e.to_string()))?;
    let rows = paths
        .paths()
        .iter()
        .zip(paths.focus(&rx, &tx))
        .enumerate()
        .map(|(l, (p, f))| {
            vec![
                l.to_string(),
                p.gain.re.to_string(),
                p.gain.im.to_string(),
                (p.delay * 1e9).to_string(),
                p.aoa.to_string(),
                p.aod.to_string(),
                f.m.to_string(),
                f.q.to_string(),
                f.eps_r.to_string(),
                f.eps_t.to_string(),
            ]
        })
        .collect();
    let header = [
        "l", "alpha_re", "alpha_im", "delay_ns", "phi_r", "phi_t", "m", "q", "eps_r", "eps_t",
    ];
    write_rows(common, &header, rows)
}

fn run(common: &Common) -> Result<(), Failure> {
    let cfg = common.load()?;
    let rows = run_experiment(&cfg)?;
    let out = common.out.as_deref();
    write_csv(&rows, common.writer()?).map_err(|e| io_failure(out, e))
}

fn sweep_to_file(common: &Common) -> Result<(), Failure> {
    let path = common
        .out
        .as_deref()
        .ok_or_else(|| Failure::Config("sweep requires --out".into()))?;
    let cfg = common.load()?;
    let rows = sweep(&cfg, path)?;
    eprintln!(
        "wrote {} rows for {} trials of {} to {}",
        rows.len(),
        cfg.trials,
        cfg.scenario,
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Response {
            common,
            side,
            angle_deg,
        } => response(common, *side, *angle_deg),
        Command::Channel { common, trial } => channel(common, *trial),
        Command::Run { common } => run(common),
        Command::Sweep { common } => sweep_to_file(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

//! Command-line front end: configuration file, subcommands and output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::distributions::{InterArrival, InterArrivalSpec};
use crate::error::{Error, Result};
use crate::estimator::{default_r_grid, DensityEstimate, Experiment, ExperimentConfig, WindowSize};
use crate::renewal::{sample_renewal, Flavor};
use crate::rng::stream;
use crate::streets::{StreetLaws, StreetModel};
use crate::validation::{run_suite, Report, Suite, ValidationOptions};

pub const DEFAULT_R_POINTS: usize = 400;

/// Experiment description read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub streets: StreetModel,
    pub lambda: f64,
    #[serde(default = "auto_window")]
    pub window_half_width: WindowSize,
    /// Defaults to four times the largest mean gap of the street model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default = "default_points")]
    pub r_points: usize,
}

fn auto_window() -> WindowSize {
    WindowSize::AUTO
}

fn default_points() -> usize {
    DEFAULT_R_POINTS
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn r_max(&self) -> Result<f64> {
        match self.r_max {
            Some(r) => Ok(r),
            None => Ok(4.0 * StreetLaws::new(&self.streets)?.max_mean_gap()),
        }
    }

    pub fn experiment(&self, n: usize, seed: u64) -> Result<ExperimentConfig> {
        if self.r_points == 0 {
            return Err(Error::Config("r_points must be at least 1".into()));
        }
        Ok(ExperimentConfig {
            streets: self.streets.clone(),
            lambda: self.lambda,
            window: self.window_half_width,
            r_grid: default_r_grid(self.r_max()?, self.r_points),
            n,
            master_seed: seed,
        })
    }
}

/// Written next to every output; enough to rerun the command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub master_seed: u64,
    pub n: usize,
    pub window_half_width: f64,
    pub version: String,
    pub rejection_rate: f64,
    pub duration_seconds: f64,
}

impl RunManifest {
    fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "manhattan-cell", version, about = "Typical cells and shortest-path lengths on random Manhattan street systems")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump renewal realizations, one coordinate per line.
    Renewal(RenewalArgs),
    /// Sample one typical cell and dump streets, points, cell and graph.
    SimulateCell(SimulateArgs),
    /// Estimate the shortest-path-length density.
    EstimateSpl(EstimateArgs),
    /// Run a validation suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FlavorArg {
    Stationary,
    Palm,
}

#[derive(Debug, Args)]
pub struct RenewalArgs {
    /// JSON file holding an inter-arrival spec, or a run config (its horizontal spec is used).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Window half-width.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    #[arg(long, value_enum, default_value_t = FlavorArg::Stationary)]
    pub flavor: FlavorArg,
    /// Number of realizations, separated by blank lines.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Number of replications.
    #[arg(long)]
    pub n: usize,
    /// Output CSV; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// renewal, palm, cox, cell, graph, estimator or all.
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Sample size per side of each KS comparison.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
}

/// What a successful command produced.
#[derive(Debug)]
pub enum Outcome {
    Done,
    Validation(Report),
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.threads {
        Some(t) => {
            if t == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Renewal(a) => cmd_renewal(&a).map(|_| Outcome::Done),
        Command::SimulateCell(a) => cmd_simulate_cell(&a.config, a.seed, &a.out).map(|_| Outcome::Done),
        Command::EstimateSpl(a) => cmd_estimate_spl(&a.config, a.n, a.seed, &a.out).map(|_| Outcome::Done),
        Command::Validate(a) => {
            let report = cmd_validate(&a.suite, a.seed, a.n)?;
            report.write_json_lines(&mut std::io::stdout().lock())?;
            Ok(Outcome::Validation(report))
        }
    }
}

fn renewal_spec(path: &Path) -> Result<InterArrivalSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(spec) = serde_json::from_str::<InterArrivalSpec>(&text) {
        return Ok(spec);
    }
    let config = RunConfig::from_json(&text)?;
    Ok(match config.streets {
        StreetModel::Manhattan { horizontal, .. } | StreetModel::Nested { horizontal, .. } => horizontal,
    })
}

pub fn cmd_renewal(args: &RenewalArgs) -> Result<()> {
    let dist = InterArrival::new(renewal_spec(&args.config)?)?;
    let flavor = match args.flavor {
        FlavorArg::Stationary => Flavor::Stationary,
        FlavorArg::Palm => Flavor::Palm,
    };
    let mut rng = stream(args.seed);
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for k in 0..args.n {
        if k > 0 {
            writeln!(out)?;
        }
        for p in sample_renewal(&dist, args.window, flavor, &mut rng)?.points {
            writeln!(out, "{p:.16e}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_points_csv(path: &Path, points: impl Iterator<Item = crate::geometry::Point>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "x,y")?;
    for p in points {
        writeln!(f, "{:.16e},{:.16e}", p.x, p.y)?;
    }
    f.flush()?;
    Ok(())
}

pub fn cmd_simulate_cell(config_path: &Path, seed: u64, out_dir: &Path) -> Result<()> {
    let start = Instant::now();
    let config = RunConfig::load(config_path)?;
    let experiment = Experiment::new(&config.experiment(1, seed)?)?;
    let t = experiment.typical_cell(0)?;
    fs::create_dir_all(out_dir)?;

    let streets = serde_json::to_string_pretty(&t.streets.to_json())?;
    fs::write(out_dir.join("streets.json"), streets + "\n")?;
    write_points_csv(&out_dir.join("points.csv"), t.pattern.points.iter().copied())?;
    let ring = t.cell.vertices.iter().chain(t.cell.vertices.first()).copied();
    write_points_csv(&out_dir.join("cell.csv"), ring)?;

    let mut nodes = BufWriter::new(File::create(out_dir.join("nodes.csv"))?);
    t.graph.write_nodes_csv(&mut nodes, &t.distances)?;
    nodes.flush()?;
    let mut edges = BufWriter::new(File::create(out_dir.join("edges.csv"))?);
    t.graph.write_edges_csv(&mut edges)?;
    edges.flush()?;

    RunManifest {
        command: "simulate-cell".into(),
        config,
        master_seed: seed,
        n: 1,
        window_half_width: t.window,
        version: env!("CARGO_PKG_VERSION").into(),
        rejection_rate: f64::from(t.rejections > 0),
        duration_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&out_dir.join("manifest.json"))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn cmd_estimate_spl(config_path: &Path, n: usize, seed: u64, out: &Path) -> Result<DensityEstimate> {
    let start = Instant::now();
    let config = RunConfig::load(config_path)?;
    let experiment = Experiment::new(&config.experiment(n, seed)?)?;
    let estimate = experiment.estimate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(out)?);
    estimate.write_csv(&mut f)?;
    f.flush()?;
    RunManifest {
        command: "estimate-spl".into(),
        config,
        master_seed: seed,
        n,
        window_half_width: experiment.window,
        version: env!("CARGO_PKG_VERSION").into(),
        rejection_rate: estimate.rejection_rate,
        duration_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&manifest_path(out))?;
    Ok(estimate)
}

pub fn cmd_validate(suite: &str, seed: u64, ks_samples: usize) -> Result<Report> {
    let suite: Suite = suite.parse()?;
    if ks_samples < 2 {
        return Err(Error::Config("--n must be at least 2".into()));
    }
    run_suite(suite, &ValidationOptions { seed, ks_samples })
}

/// Process exit code for a library error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::RejectionRate { .. } => 3,
        _ => 1,
    }
}

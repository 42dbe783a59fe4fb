//! `pmlb`: run scenarios, sweep the objective weight on a frozen snapshot,
//! compare rounding strategies, and check scenario files.
//!
//! Exit status is 0 on success, 1 for bad arguments or configuration and 2
//! when a run fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use pmlb_core::balancer::{
    pareto_point, random_instance, rounding_study, BalancerError, InstanceParams, RoundingRow,
};
use pmlb_core::kpi::{write_report, KpiError, KpiReport, ReportFormat};
use pmlb_core::lp::MilpOptions;
use pmlb_core::sim::{run_episode, snapshot_problem, Algorithm, ScenarioConfig, SimError};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Parse { .. } | SimError::Io { .. } => {
                CliError::Config(e.to_string())
            }
            SimError::Balancer(BalancerError::Config(_)) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<BalancerError> for CliError {
    fn from(e: BalancerError) -> Self {
        match e {
            BalancerError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<KpiError> for CliError {
    fn from(e: KpiError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pmlb", version, about = "Multi-band load balancing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one episode and write its per-window KPIs.
    Run(RunArgs),
    /// Sweep the objective weight on a frozen load snapshot.
    Pareto(ParetoArgs),
    /// Compare the relaxation, exact program and both roundings on random instances.
    RoundingStudy(StudyArgs),
    /// Check scenario files without running them.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Built-in scenario: A, B or C.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario file in TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    /// UEs per cell; inter-arrival times scale to keep the offered load.
    #[arg(long)]
    ues: Option<usize>,
    /// Episode length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Objective weight of the max-load term.
    #[arg(long)]
    w: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_path(path)?,
            None => ScenarioConfig::named(self.scenario.as_deref().unwrap_or("A"))?,
        };
        if let Some(n) = self.ues {
            if n == 0 {
                return Err(CliError::Config("--ues must be at least 1".into()));
            }
            cfg = cfg.scaled(n);
        }
        if let Some(d) = self.duration {
            cfg.sim_duration = d;
        }
        if let Some(w) = self.w {
            cfg.balancer.w = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// pmlb, no_mlb, a2_mlb or rule_based.
    #[arg(long)]
    algorithm: Option<String>,
    /// Report path; without it only the aggregates are printed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; defaults to the extension of --out, else csv.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct ParetoArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated weights in [0, 1]. Defaults to 0, 0.1, ..., 1.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// Comma-separated seeds, one snapshot each.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [20, 40, 60, 80])]
    ue_counts: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    bands: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4])]
    seed: Vec<u64>,
    /// Number of UE profiles; 0 draws every UE independently.
    #[arg(long, default_value_t = 0)]
    profiles: usize,
    #[arg(long, default_value_t = 0.4)]
    w: f64,
    /// Random roundings averaged per instance.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 100_000)]
    node_limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

fn print_aggregates(report: &KpiReport) {
    let a = &report.aggregates;
    let m = &report.metadata;
    println!("scenario {}", m.scenario);
    println!("algorithm {}", m.algorithm);
    println!("seed {}", m.seed);
    println!("windows {}", a.windows);
    println!("avg_throughput {}", a.avg_throughput);
    println!("min_throughput {}", a.min_throughput);
    println!("lbi {}", a.lbi);
    println!("ho_count {}", a.total_ho_count);
    println!("interruption_ms {}", a.total_interruption_ms);
    let loads: Vec<String> = a.per_band_load.iter().map(|l| l.to_string()).collect();
    println!("per_band_load {}", loads.join(","));
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = args.scenario.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &args.algorithm {
        cfg.algorithm = name.parse::<Algorithm>().map_err(CliError::Config)?;
    }
    let report = run_episode(&cfg)?;
    if let Some(out) = &args.out {
        let format = match args.format {
            Some(Format::Json) => ReportFormat::Json,
            Some(Format::Csv) => ReportFormat::Csv,
            None if out.extension().is_some_and(|e| e == "json") => ReportFormat::Json,
            None => ReportFormat::Csv,
        };
        write_report(&report, format, out)?;
    }
    print_aggregates(&report);
    Ok(())
}

#[derive(Debug, Serialize)]
struct ParetoRow {
    w: f64,
    seed: u64,
    f1: f64,
    f2: f64,
    f1_norm: f64,
    f2_norm: f64,
    objective: f64,
}

fn write_rows<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(
            std::fs::File::create(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

fn cmd_pareto(args: &ParetoArgs) -> Result<(), CliError> {
    let cfg = args.scenario.load()?;
    let weights = if args.weights.is_empty() {
        (0..=10).map(|i| i as f64 / 10.0).collect()
    } else {
        args.weights.clone()
    };
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(CliError::Config(format!("weight {w} outside [0, 1]")));
    }
    let seeds = if args.seed.is_empty() {
        vec![cfg.seed]
    } else {
        args.seed.clone()
    };
    let snapshots = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig {
                seed,
                ..cfg.clone()
            };
            snapshot_problem(&cfg, cfg.balancer.w).map(|p| (seed, p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(f64, usize)> = weights
        .iter()
        .flat_map(|&w| (0..snapshots.len()).map(move |i| (w, i)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(w, i)| {
            let (seed, p) = &snapshots[i];
            let pt = pareto_point(p, w)?;
            Ok(ParetoRow {
                w,
                seed: *seed,
                f1: pt.f1,
                f2: pt.f2,
                f1_norm: pt.f1_norm,
                f2_norm: pt.f2_norm,
                objective: pt.objective,
            })
        })
        .collect::<Result<Vec<_>, BalancerError>>()?;
    rows.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.seed.cmp(&b.seed)));
    write_rows(&rows, args.out.as_deref())
}

fn cmd_rounding_study(args: &StudyArgs) -> Result<(), CliError> {
    if args.ue_counts.contains(&0) || args.bands == 0 {
        return Err(CliError::Config(
            "UE counts and the band count must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&args.w) {
        return Err(CliError::Config(format!("--w {} outside [0, 1]", args.w)));
    }
    let opts = MilpOptions {
        node_limit: args.node_limit,
        ..MilpOptions::default()
    };
    // Sequential on purpose: the rows carry wall-clock timings.
    let mut rows: Vec<RoundingRow> = Vec::new();
    for &u in &args.ue_counts {
        for &seed in &args.seed {
            let mut params = InstanceParams::new(u, args.bands);
            params.w = args.w;
            params.profiles = args.profiles;
            let problem = random_instance(&params, seed);
            rows.push(rounding_study(&problem, seed, args.samples, opts)?);
        }
    }
    rows.sort_by_key(|r| (r.n_ues, r.seed));
    write_rows(&rows, args.out.as_deref())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let mut failed = 0;
    for path in &args.files {
        match ScenarioConfig::from_path(path) {
            Ok(_) => println!("ok {}", path.display()),
            Err(e @ SimError::Config(_)) => {
                failed += 1;
                println!("invalid {}: {e}", path.display());
            }
            Err(e) => {
                failed += 1;
                println!("invalid {e}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Config(format!(
            "{failed} of {} files invalid",
            args.files.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Pareto(a) => cmd_pareto(a),
        Command::RoundingStudy(a) => cmd_rounding_study(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

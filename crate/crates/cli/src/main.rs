use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popcast::error::{Error, Result};
use popcast::harness::{self, ExperimentConfig, Mode, Report};
use popcast::sim::{write_arrivals, write_traces, write_traces_file};

#[derive(Parser)]
#[command(
    name = "popcast",
    version,
    about = "Online popularity forecasting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace corpus (or an arrival stream with --arrivals)
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Emit regret-experiment arrival contexts instead of traces
        #[arg(long)]
        arrivals: bool,
    },
    /// Run Social-Forecast and the benchmarks over a corpus
    Run(Common),
    /// Solve a discrete world file and print the optimal policy
    Oracle(Common),
    /// Measure single-age regret on an embedded discrete world
    Regret(Common),
    /// Run the benchmark predictors only
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set lambda=0.015
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as output_dir=...)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, mode: Mode) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
            config.set(k.trim(), v.trim())?;
        }
        if let Some(dir) = &self.output {
            config.output_dir = Some(dir.clone());
        }
        config.mode = mode;
        config.validate()?;
        Ok(config)
    }
}

fn print_report(report: &Report, out: &mut impl Write) -> io::Result<()> {
    if !report.summary.is_empty() {
        writeln!(
            out,
            "{:<16} {:>8} {:>10} {:>8} {:>8} {:>9}",
            "algorithm", "videos", "normalized", "tp", "tn", "mean_age"
        )?;
        for s in &report.summary {
            let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
            writeln!(
                out,
                "{:<16} {:>8} {:>10.4} {:>8} {:>8} {:>9}",
                s.algorithm,
                s.videos,
                s.normalized_reward,
                fmt(s.true_positive_rate),
                fmt(s.true_negative_rate),
                s.mean_forecast_age
                    .map_or_else(|| "NA".to_string(), |x| format!("{x:.2}")),
            )?;
        }
    }
    for f in &report.regret_fit {
        writeln!(
            out,
            "age {} {} arrivals: K={} p={} R(K)={:.4} slope={} theory={:.4}",
            f.age,
            f.arrival,
            f.instances,
            f.split_exponent,
            f.final_regret,
            f.fitted_slope
                .map_or_else(|| "NA".to_string(), |s| format!("{s:.4}")),
            f.theoretical_exponent,
        )?;
    }
    for p in &report.policy {
        writeln!(
            out,
            "age {} {:<12} p={:<8.4} {}",
            p.age, p.symbol, p.probability, p.action
        )?;
    }
    for (name, v) in &report.values {
        writeln!(out, "V({name}) = {v}")?;
    }
    Ok(())
}

fn finish(report: Report, config: &ExperimentConfig) -> Result<()> {
    if let Some(dir) = &config.output_dir {
        report.emit(dir)?;
    }
    let stdout = io::stdout();
    print_report(&report, &mut stdout.lock()).map_err(|e| Error::io("<stdout>", e))
}

fn simulate(config: &ExperimentConfig, arrivals: bool) -> Result<()> {
    if arrivals {
        let xs = harness::arrival_stream(config)?;
        return match &config.output_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("arrivals.csv");
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_arrivals(io::BufWriter::new(file), &xs)
            }
            None => write_arrivals(io::stdout().lock(), &xs),
        };
    }
    let traces = harness::load_corpus(config)?;
    match &config.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_traces_file(&dir.join("traces.csv"), &traces)
        }
        None => write_traces(io::stdout().lock(), &traces),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, arrivals } => {
            simulate(&common.resolve(Mode::Simulate)?, arrivals)
        }
        Command::Run(common) => {
            let config = common.resolve(Mode::Run)?;
            finish(harness::run_experiment(&config)?, &config)
        }
        Command::Bench(common) => {
            let config = common.resolve(Mode::Bench)?;
            finish(harness::run_experiment(&config)?, &config)
        }
        Command::Regret(common) => {
            let config = common.resolve(Mode::Regret)?;
            finish(harness::regret_experiment(&config)?, &config)
        }
        Command::Oracle(common) => {
            let config = common.resolve(Mode::Oracle)?;
            finish(harness::oracle_experiment(&config)?, &config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

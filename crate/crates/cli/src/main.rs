//! `trendscan`: price panels to mean correlation, change-point posteriors,
//! fits, model evidence and on-line sensitivity horizons.
//!
//! Exit status: 0 on success (an undetected onset is a finding, not a
//! failure), 2 on invalid input or parameters, 3 when the configuration
//! count exceeds the enumeration budget.

mod commands;
mod manifest;
mod settings;
mod svg;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::Retro;
use crate::manifest::Run;
use crate::settings::Settings;

const THREADS_ENV: &str = "TRENDSCAN_THREADS";

#[derive(Parser)]
#[command(name = "trendscan", version, about = "Exact Bayesian change-point analysis of market correlation trends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prices CSV to mean correlation series (full and thinned).
    Preprocess(Opts),
    /// Posterior summary, marginals and fit of a series.
    Analyze(Opts),
    /// Change-point marginal densities only.
    Marginals(Opts),
    /// Posterior-weighted fit with confidence band only.
    Fit(Opts),
    /// Segment analysis plus sensitivity horizon for an onset.
    Online(Opts),
    /// Sensitivity horizon report and trace only.
    Sensitivity(Opts),
    /// Model evidence for 0..=num-cps change points.
    Evidence(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// Prices CSV (preprocess) or correlation series CSV (all others).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// Correlation window length in trading days [42].
    #[arg(long)]
    tau: Option<usize>,
    /// Local normalization window [13].
    #[arg(long)]
    norm_window: Option<usize>,
    /// Thinning stride [preprocess 40, online/sensitivity 10, others 1].
    #[arg(long)]
    stride: Option<usize>,
    /// Minimum share of quoted days for a ticker to be kept [0.995].
    #[arg(long)]
    coverage: Option<f64>,
    /// Change points [analyze 2, online 1; evidence: largest m, 4].
    #[arg(long)]
    num_cps: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Half-width of the fit band in sigmas [3].
    #[arg(long)]
    band_multiplier: Option<f64>,
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    end: Option<String>,
    #[arg(long)]
    onset: Option<String>,
    /// Allowed distance of the density peak from the onset [100].
    #[arg(long)]
    tolerance_days: Option<usize>,
    /// Worker threads; overrides TRENDSCAN_THREADS [available cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Raise the enumeration budget to this many configurations [5e8].
    #[arg(long)]
    budget_override: Option<u64>,
    /// Also write plot.svg.
    #[arg(long)]
    svg: bool,
    /// key=value file, or the manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Opts {
    fn flags(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("input", self.input.as_ref().map(|p| p.display().to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("norm-window", self.norm_window.map(|v| v.to_string()));
        put("stride", self.stride.map(|v| v.to_string()));
        put("coverage", self.coverage.map(|v| v.to_string()));
        put("num-cps", self.num_cps.map(|v| v.to_string()));
        put("top-k", self.top_k.map(|v| v.to_string()));
        put("band-multiplier", self.band_multiplier.map(|v| v.to_string()));
        put("start", self.start.clone());
        put("end", self.end.clone());
        put("onset", self.onset.clone());
        put("tolerance-days", self.tolerance_days.map(|v| v.to_string()));
        put("budget-override", self.budget_override.map(|v| v.to_string()));
        put("svg", self.svg.then(|| "true".to_string()));
        m
    }
}

/// Flag first, then the environment, else `None` (all available cores).
fn workers(flag: Option<usize>) -> Result<Option<usize>> {
    let w = match flag {
        Some(w) => Some(w),
        None => match std::env::var(THREADS_ENV) {
            Ok(raw) => Some(
                raw.trim()
                    .parse::<usize>()
                    .map_err(|e| anyhow::anyhow!("invalid {THREADS_ENV} `{raw}`: {e}"))?,
            ),
            Err(_) => None,
        },
    };
    if w == Some(0) {
        bail!("worker count must be at least 1");
    }
    Ok(w)
}

fn run(command: Command) -> Result<()> {
    let (name, opts) = match &command {
        Command::Preprocess(o) => ("preprocess", o),
        Command::Analyze(o) => ("analyze", o),
        Command::Marginals(o) => ("marginals", o),
        Command::Fit(o) => ("fit", o),
        Command::Online(o) => ("online", o),
        Command::Sensitivity(o) => ("sensitivity", o),
        Command::Evidence(o) => ("evidence", o),
    };
    let settings = Settings::new(name, opts.flags(), opts.config.as_deref())?;
    let mut run = Run::new(name, settings, opts.output_dir.clone(), workers(opts.workers)?)?;
    match command {
        Command::Preprocess(_) => commands::preprocess(&mut run)?,
        Command::Analyze(_) => commands::retrospective(&mut run, Retro::Analyze)?,
        Command::Marginals(_) => commands::retrospective(&mut run, Retro::Marginals)?,
        Command::Fit(_) => commands::retrospective(&mut run, Retro::Fit)?,
        Command::Online(_) => commands::online(&mut run)?,
        Command::Sensitivity(_) => commands::sensitivity(&mut run)?,
        Command::Evidence(_) => commands::evidence(&mut run)?,
    }
    run.finish()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let budget = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<trendscan::Error>(), Some(trendscan::Error::BudgetExceeded { .. })));
    if budget {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

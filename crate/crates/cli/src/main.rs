//! `znl`: command line front end for the stochastic Zakharov lab.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::output::Failure;

#[derive(Debug, Parser)]
#[command(name = "znl", version, about = "Stochastic Zakharov simulator and property-test lab")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (falls back to `ZNL_THREADS`).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the well-posedness and noise-regularization regimes on an (s, l) grid.
    Regimes {
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 0.125)]
        grid_step: f64,
        #[arg(long, default_value = "regions.csv")]
        out: PathBuf,
    },
    /// Integrate one path and write the norm time series.
    Simulate {
        /// Also write the driving Brownian paths as `(t, k, beta)`.
        #[arg(long)]
        export_paths: bool,
    },
    /// Compare the Itô and rescaled conservative forms on shared paths.
    TransformCheck {
        /// Number of step halvings after the configured dt.
        #[arg(long, default_value_t = 2)]
        refinements: u32,
    },
    /// Besov and Hölder norms of a sampled time series.
    Norms {
        #[arg(long)]
        input: PathBuf,
        /// Column holding the samples (default: the last one).
        #[arg(long)]
        column: Option<String>,
        /// Keep only rows whose `k` column equals this index.
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, value_delimiter = ',')]
        besov: Option<Vec<f64>>,
        #[arg(long)]
        holder: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long, default_value = "norms.json")]
        out: PathBuf,
    },
    /// Adapted space-time norms of snapshot frames.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        s_norm: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        w_norm: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<f64>>,
        /// Use the tilde variant of the Schrödinger norm.
        #[arg(long)]
        tilde: bool,
        #[arg(long, default_value_t = 0.25)]
        taper: f64,
        #[arg(long, default_value = "diagnose.json")]
        out: PathBuf,
    },
    /// Monte Carlo scattering probability against noise strength.
    McScatter {
        #[arg(long, default_value_t = 200)]
        n_paths: usize,
        /// Overrides `noise.c_grid`.
        #[arg(long, value_delimiter = ',')]
        c_grid: Option<Vec<f64>>,
    },
    /// Probability that the GBM Besov norm on [1/c, T] exceeds eps.
    GbmDecay {
        #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
        c_grid: Vec<f64>,
        #[arg(long, default_value_t = 0.45)]
        s: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        base_dt: f64,
        #[arg(long, default_value_t = 40.0)]
        tail: f64,
        #[arg(long, default_value = "gbm_decay.csv")]
        out: PathBuf,
    },
    /// Two-sample KS test of the GBM Besov scaling identity.
    GbmScaling {
        #[arg(long, default_value_t = 4.0)]
        c: f64,
        #[arg(long, default_value_t = 0.45)]
        s: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 2000)]
        n_paths: usize,
        #[arg(long, default_value_t = 512)]
        samples: usize,
        #[arg(long, default_value_t = 0.25)]
        ramp: f64,
        #[arg(long, default_value = "gbm_scaling.json")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("znl: {f}");
            ExitCode::from(f.code())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

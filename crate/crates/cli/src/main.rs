//! `hypcoop`: MNNR clustering of resource-marked nodes, analytic pair
//! fractions and interference, and their simulation counterparts.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! non-convergence.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hypcoop::pointprocess::Boundary;

use config::{FileConfig, Mode, VolumeMethodArg};

#[derive(Parser)]
#[command(
    name = "hypcoop",
    version,
    about = "Hyperbolic MNNR clustering of resource-marked wireless nodes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fraction of atoms in cooperative pairs.
    PairFraction {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Pair fraction for Beta marks over a list of variances.
    SweepVariance {
        /// Mean of the Beta marks.
        #[arg(long)]
        mean: Option<f64>,
        /// Comma-separated variances.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        variances: Option<Vec<f64>>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Expected interference at the origin from singles and from pairs.
    Interference {
        /// Pathloss exponent, > 2.
        #[arg(long)]
        beta: Option<f64>,
        /// Exclusion radius, or a comma-separated sweep.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        excl_radius: Option<Vec<f64>>,
        /// Ignore atoms beyond this distance.
        #[arg(long)]
        outer_radius: Option<f64>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Partition a pattern file into pairs and singles.
    Cluster {
        /// Pattern CSV with header x,y,z.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        control: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Weighted union volume F(s, z, ztilde).
    Volume {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        ztilde: Option<f64>,
        #[arg(long)]
        marks: Option<String>,
        #[arg(long, value_enum)]
        method: Option<VolumeMethodArg>,
        /// Monte Carlo sample count.
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Intensity of the point process.
    #[arg(long)]
    lambda: Option<f64>,
    /// e.g. degenerate:mu=0.5, beta:mean=0.5,var=0.05, uniform:lo=0.2,hi=0.8
    #[arg(long)]
    marks: Option<String>,
    /// full, empty, minproduct:tau=T or maxratio:rho=R
    #[arg(long)]
    control: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Gauss–Legendre nodes per mark axis.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Simulation window, WxH.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    boundary: Option<Boundary>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn flags(&self) -> FileConfig {
        FileConfig {
            seed: self.seed,
            reps: self.reps,
            window: self.window.clone(),
            boundary: self.boundary,
            workers: self.workers,
            ..Default::default()
        }
    }
}

impl ModelArgs {
    fn flags(self, base: FileConfig) -> FileConfig {
        FileConfig {
            lambda: self.lambda,
            marks: self.marks,
            control: self.control,
            mode: self.mode,
            nodes: self.nodes,
            ..base
        }
    }
}

type Runner = fn(FileConfig, Option<&std::path::Path>) -> Result<()>;

fn run(cli: Cli) -> Result<()> {
    let (name, runner, common, flags): (&str, Runner, Common, FileConfig) = match cli.command {
        Command::PairFraction { model, common } => {
            let f = model.flags(common.flags());
            ("pair-fraction", commands::pair_fraction, common, f)
        }
        Command::SweepVariance {
            mean,
            variances,
            model,
            common,
        } => {
            let f = FileConfig {
                mean,
                variances,
                ..model.flags(common.flags())
            };
            ("sweep-variance", commands::sweep_variance, common, f)
        }
        Command::Interference {
            beta,
            excl_radius,
            outer_radius,
            model,
            common,
        } => {
            let f = FileConfig {
                beta,
                excl_radius,
                outer_radius,
                ..model.flags(common.flags())
            };
            ("interference", commands::interference, common, f)
        }
        Command::Cluster { input, control, common } => {
            let f = FileConfig {
                input,
                control,
                ..common.flags()
            };
            ("cluster", commands::cluster, common, f)
        }
        Command::Volume {
            s,
            z,
            ztilde,
            marks,
            method,
            samples,
            common,
        } => {
            let f = FileConfig {
                s,
                z,
                ztilde,
                marks,
                method,
                samples,
                ..common.flags()
            };
            ("volume", commands::volume, common, f)
        }
    };
    let base = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut cfg = base.overlay(flags);
    cfg.check_command(name)?;
    let out = common.out.as_deref();
    match cfg.workers {
        Some(0) => anyhow::bail!("--workers must be positive"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot start worker pool")?
            .install(|| runner(cfg, out)),
        None => runner(cfg, out),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let stalled = e
        .chain()
        .filter_map(|c| c.downcast_ref::<hypcoop::Error>())
        .any(hypcoop::Error::is_non_convergence);
    if stalled {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use opcorr_core::phantoms::PhantomKind;

use crate::config::{ExperimentConfig, MethodName, Scale};
use crate::error::{Error, Result};
use crate::experiment::{cmd_evaluate, cmd_generate, cmd_reconstruct, cmd_train};
use crate::toy_demo::{cmd_toy_demo, ToyDemoConfig};

#[derive(Debug, Parser)]
#[command(name = "opcorr", version, about = "Learned corrections of approximate forward operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (JSON); without it the preset for --kind/--scale is used.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Restrict train/reconstruct to one method.
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodName>,
    /// Budget tier; with --config it replaces the config's budgets.
    #[arg(long, global = true, value_enum)]
    pub scale: Option<Scale>,
    /// Phantom family of the preset used when no --config is given.
    #[arg(long, global = true, value_parser = parse_kind)]
    pub kind: Option<PhantomKind>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train/test dataset.
    Generate,
    /// Train corrections (or estimate error statistics).
    Train,
    /// Reconstruct test samples, tuning λ per method.
    Reconstruct {
        /// Comma-separated test-sample indices (default: the configured number).
        #[arg(long, value_delimiter = ',')]
        samples: Option<Vec<usize>>,
    },
    /// Aggregate traces into figure CSVs, table1.csv and PNG panels.
    Evaluate,
    /// Toy downsampling demo with embedded checks.
    ToyDemo {
        /// Image side (even, at least 16).
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Forward-only iterations of the range-confinement run.
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
}

fn parse_kind(s: &str) -> std::result::Result<PhantomKind, String> {
    match s {
        "balls" => Ok(PhantomKind::Balls),
        "vessels" => Ok(PhantomKind::Vessels),
        other => Err(format!("unknown kind `{other}` (expected balls or vessels)")),
    }
}

impl ExperimentConfig {
    /// Replaces the budget-dependent fields by those of the `scale` preset.
    pub fn apply_scale(&mut self, scale: Scale) {
        let p = ExperimentConfig::preset(self.kind(), scale);
        self.scale = scale;
        self.dataset.n_train = p.dataset.n_train;
        self.dataset.n_test = p.dataset.n_test;
        self.arch = p.arch;
        self.train = p.train;
        self.recursive_n_max = p.recursive_n_max;
        self.solve.max_iters = p.solve.max_iters;
        self.aem_max_iters = p.aem_max_iters;
        self.lambda_grid.points = p.lambda_grid.points;
        self.lambda_grid.pilot_points = p.lambda_grid.pilot_points;
        self.lambda_grid.tune_samples = p.lambda_grid.tune_samples;
        self.test_samples = p.test_samples;
    }
}

/// Loads the config (or preset) and applies the command-line overrides.
pub fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(kind) = common.kind {
                if kind != cfg.kind() {
                    return Err(Error::Config("--kind conflicts with the config's dataset kind".into()));
                }
            }
            if let Some(scale) = common.scale {
                cfg.apply_scale(scale);
            }
            cfg
        }
        None => ExperimentConfig::preset(
            common.kind.unwrap_or(PhantomKind::Balls),
            common.scale.unwrap_or(Scale::Ci),
        ),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    cfg.resolve_seeds();
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the parsed command; `Ok(false)` means an embedded check failed.
pub fn run(cli: Cli) -> Result<bool> {
    let common = &cli.common;
    if let Command::ToyDemo { n, iterations } = cli.command {
        let cfg = ToyDemoConfig {
            n,
            iterations,
            seed: common.seed.unwrap_or(0),
            ..ToyDemoConfig::default()
        };
        let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs/toy"));
        let report = cmd_toy_demo(&cfg, &out)?;
        for c in &report.checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        println!("panels written to {}", out.join("panels").display());
        return Ok(report.passed());
    }
    let cfg = resolve_config(common)?;
    let methods: Vec<MethodName> = match common.method {
        Some(m) => vec![m],
        None => cfg.methods.clone(),
    };
    match cli.command {
        Command::Generate => {
            let manifest = cmd_generate(&cfg)?;
            println!("{}", manifest.display());
        }
        Command::Train => {
            for m in methods {
                eprintln!("training {m}");
                let report = cmd_train(&cfg, m)?;
                for row in &report.history {
                    eprintln!(
                        "  epoch {:>3}  forward {:.4e}  adjoint {:.4e}  N_iter {}  {:.1}s",
                        row.epoch, row.forward_loss, row.adjoint_loss, row.n_iter, row.wall_time
                    );
                }
                for a in &report.artifacts {
                    println!("{}", a.display());
                }
            }
        }
        Command::Reconstruct { samples } => {
            let cross = common.method.is_none();
            let summaries = cmd_reconstruct(&cfg, &methods, cross, samples.as_deref())?;
            let mut ok = true;
            for s in &summaries {
                println!(
                    "{:<40} λ = {:.3e}  mean rel L2 = {:.4} ± {:.4}  bound violations {}/{}",
                    s.label,
                    s.lambda,
                    s.mean_rel_l2,
                    s.std_rel_l2,
                    s.lemma_violations,
                    s.samples.len()
                );
                ok &= s.lemma_violations == 0;
            }
            return Ok(ok);
        }
        Command::Evaluate => {
            let report = cmd_evaluate(&cfg)?;
            for row in &report.table {
                println!("{:<40} {:.4}", row.method, row.mean_rel_l2);
            }
            println!("figures written to {}", cfg.figures_dir().display());
        }
        Command::ToyDemo { .. } => unreachable!("handled above"),
    }
    Ok(true)
}

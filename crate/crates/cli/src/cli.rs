use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ocp_core::{EnvSpec, Variant};

use crate::commands::SweepAxis;
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ocp", version, about = "Online conformal prediction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one suite of seeds.
    Run(CommonArgs),
    /// Run one suite per value of a single parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// K, alpha, c, T or algorithm.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values of the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Re-validate the logs written by `run`.
    Check {
        dir: PathBuf,
    },
    /// Write the environment stream of `--seed` to the file given by `--out`.
    MakeReplay(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alg: Option<Variant>,
    /// iid, exponent, shift, adaptive or replay:PATH.
    #[arg(long, value_parser = parse_env)]
    pub env: Option<EnvSpec>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub gamma_override: Option<f64>,
}

fn parse_env(s: &str) -> std::result::Result<EnvSpec, String> {
    EnvSpec::from_short(s).map_err(|e| e.to_string())
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            algorithm: self.alg,
            env: self.env.clone(),
            k: self.k,
            horizon: self.t,
            alpha: self.alpha,
            c: self.c,
            rho: self.rho,
            delta: self.delta,
            seed: self.seed,
            seeds: self.seeds,
            gamma_override: self.gamma_override,
            out: self.out.clone(),
        }
    }

    /// File values (or defaults) with the flags applied on top. Not validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text)
                    .map_err(|e| crate::config::ConfigError::Parse(e.to_string()))
                    .with_context(|| format!("in {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        self.overrides().apply(&mut config);
        Ok(config)
    }
}

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ocp_core::environments::write_replay;
use ocp_core::harness::{c_mc_from_plays, lemma1_check, theorem_bound_rhs};
use ocp_core::rng::suite_seed;
use ocp_core::{HyperParams, LossParams, MiscoverBit, RunSpec, RunSummary, ThresholdGrid};
use rayon::prelude::*;

use crate::config::{ConfigError, RunConfig};
use crate::output::{
    read_steps, read_summary, steps_path, summary_path, sweep_row, write_aggregate, write_steps,
    write_summary, SWEEP_HEADER,
};

pub const THREADS_VAR: &str = "OCP_THREADS";
pub const CONFIG_FILE: &str = "config.toml";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Worker pool sized by `OCP_THREADS` when set.
fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_VAR} must be a positive integer, got '{v}'"))?;
        anyhow::ensure!(n > 0, "{THREADS_VAR} must be a positive integer, got '{v}'");
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn run_spec(config: &RunConfig, seed: u64) -> Result<RunSpec> {
    let mut spec = RunSpec::standard(
        config.algorithm,
        config.k,
        config.horizon,
        config.alpha,
        config.c,
        config.rho,
        seed,
    )?;
    spec.delta = config.delta;
    if let Some(gamma) = config.gamma_override {
        spec.hyper = HyperParams::new(spec.hyper.eta, gamma, spec.hyper.beta)?;
    }
    Ok(spec)
}

/// One run of a suite: writes its step log and summary into `dir`.
fn run_one(config: &RunConfig, seed: u64, dir: &Path, digest: &str) -> Result<RunSummary> {
    let spec = run_spec(config, seed)?;
    let mut env = config.env.build(&spec.grid, spec.horizon, seed)?;
    let log = ocp_core::run(env.as_mut(), &spec).with_context(|| format!("run with seed {seed}"))?;
    let mut summary = log.summary;
    summary.config_digest = Some(digest.to_string());
    write_steps(&steps_path(dir, seed), &log.records)?;
    write_summary(&summary_path(dir, seed), &summary)?;
    Ok(summary)
}

/// Run every seed of `config` into `dir`; summaries come back sorted by seed.
pub fn run_suite(config: &RunConfig, dir: &Path) -> Result<Vec<RunSummary>> {
    config.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), config.to_canonical())?;
    let digest = config.digest();
    let seeds: Vec<u64> = (0..config.seeds as u64).map(|i| suite_seed(config.seed, i)).collect();
    let mut summaries = pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_one(config, seed, dir, &digest))
            .collect::<Result<Vec<_>>>()
    })?;
    summaries.sort_by_key(|s| s.seed);
    write_aggregate(&dir.join(AGGREGATE_FILE), &summaries)?;
    Ok(summaries)
}

/// Print failures; true when every Lemma-1 check passed.
fn report(summaries: &[RunSummary]) -> bool {
    let failures: Vec<&RunSummary> = summaries.iter().filter(|s| !s.lemma1_pass).collect();
    for s in &failures {
        eprintln!("lemma-1 check failed: seed {} slack {:e}", s.seed, s.lemma1_slack);
    }
    failures.is_empty()
}

pub fn cmd_run(config: &RunConfig) -> Result<bool> {
    let summaries = run_suite(config, &config.out)?;
    let ok = report(&summaries);
    println!(
        "{} run(s) written to {}; lemma-1 {}",
        summaries.len(),
        config.out.display(),
        if ok { "passed" } else { "FAILED" }
    );
    Ok(ok)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Alpha,
    C,
    T,
    Algorithm,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::K => "K",
            SweepAxis::Alpha => "alpha",
            SweepAxis::C => "c",
            SweepAxis::T => "T",
            SweepAxis::Algorithm => "algorithm",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "K" | "k" => Ok(SweepAxis::K),
            "alpha" => Ok(SweepAxis::Alpha),
            "c" => Ok(SweepAxis::C),
            "T" | "t" => Ok(SweepAxis::T),
            "algorithm" | "alg" => Ok(SweepAxis::Algorithm),
            other => Err(format!(
                "unknown sweep axis '{other}', expected one of K, alpha, c, T, algorithm"
            )),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, config: &mut RunConfig, value: &str) -> Result<()> {
        let bad = |e: &dyn fmt::Display| anyhow::anyhow!("bad {self} value '{value}': {e}");
        match self {
            SweepAxis::K => config.k = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::Alpha => config.alpha = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::C => config.c = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::T => config.horizon = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::Algorithm => config.algorithm = value.parse().map_err(|e| bad(&e))?,
        }
        Ok(())
    }
}

/// One full suite per axis value under `out/<axis>-<value>/`, plus a
/// `sweep-<axis>.csv` table with one row per value.
pub fn cmd_sweep(config: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<bool> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let mut point = config.clone();
        axis.apply(&mut point, value)?;
        point.out = config.out.join(format!("{axis}-{value}"));
        point.validate()?;
        points.push((value, point));
    }
    fs::create_dir_all(&config.out)?;
    let mut table = vec![SWEEP_HEADER.to_string()];
    let mut ok = true;
    for (value, point) in &points {
        let summaries = run_suite(point, &point.out)?;
        ok &= report(&summaries);
        table.push(sweep_row(value, &summaries));
    }
    let path = config.out.join(format!("sweep-{axis}.csv"));
    fs::write(&path, table.join("\n") + "\n")?;
    println!(
        "{} sweep points written to {}; lemma-1 {}",
        points.len(),
        config.out.display(),
        if ok { "passed" } else { "FAILED" }
    );
    Ok(ok)
}

/// Outcome of re-validating one logged run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub seed: u64,
    pub digest_ok: bool,
    pub log_consistent: Option<bool>,
    pub lemma1_pass: bool,
    pub lemma1_slack: f64,
    pub bound_rhs: f64,
    pub bound_holds: bool,
}

impl CheckLine {
    pub fn ok(&self) -> bool {
        self.digest_ok && self.log_consistent != Some(false) && self.lemma1_pass
    }
}

fn summary_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("summary-seed") && n.ends_with(".toml"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Recompute coverage metrics from the step logs, then the pathwise
/// inequality (with the logged regret) and the bound.
pub fn cmd_check(dir: &Path) -> Result<Vec<CheckLine>> {
    let config_text = fs::read_to_string(dir.join(CONFIG_FILE))
        .with_context(|| format!("reading {}", dir.join(CONFIG_FILE).display()))?;
    let config = RunConfig::parse(&config_text)?;
    let digest = config.digest();
    let grid = ThresholdGrid::uniform(config.k)?;
    let params = LossParams::for_horizon(config.alpha, config.c, config.horizon, config.rho)?;
    let files = summary_files(dir)?;
    if files.is_empty() {
        bail!("no run summaries in {}", dir.display());
    }
    let mut lines = Vec::with_capacity(files.len());
    for file in files {
        let s = read_summary(&file)?;
        let steps = steps_path(dir, s.seed);
        let (mc, c_mc, log_consistent) = if steps.exists() {
            let rows = read_steps(&steps)?;
            let t = rows.len();
            anyhow::ensure!(t == s.horizon, "{}: {t} rows, summary says {}", steps.display(), s.horizon);
            let plays = rows
                .iter()
                .map(|r| Ok((grid.value(r.arm), MiscoverBit::from_u8(r.m)?)))
                .collect::<ocp_core::Result<Vec<_>>>()?;
            let offset = c_mc_from_plays(plays, &params)?;
            let mc = offset.n1 as f64 / t as f64;
            let ineff = rows.iter().map(|r| r.set_size as u64).sum::<u64>() as f64 / t as f64;
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            let consistent = close(mc, s.mc) && close(ineff, s.ineff) && close(offset.c_mc, s.c_mc);
            (mc, offset.c_mc, Some(consistent))
        } else {
            (s.mc, s.c_mc, None)
        };
        let lemma = lemma1_check(mc, config.alpha, s.regret, s.horizon, c_mc, s.seed);
        let bound = theorem_bound_rhs(s.variant, s.k, s.horizon, config.delta, &params, s.c_const, c_mc)?;
        lines.push(CheckLine {
            seed: s.seed,
            digest_ok: s.config_digest.as_deref() == Some(digest.as_str()),
            log_consistent,
            lemma1_pass: lemma.pass,
            lemma1_slack: lemma.slack,
            bound_rhs: bound.rhs,
            bound_holds: bound.rhs >= mc - config.alpha,
        });
    }
    Ok(lines)
}

pub fn print_check(lines: &[CheckLine]) -> bool {
    for l in lines {
        println!(
            "seed {}: {} lemma-1 slack {}{}{}, bound rhs {} {}",
            l.seed,
            if l.ok() { "PASS" } else { "FAIL" },
            crate::output::sig9(l.lemma1_slack),
            if l.digest_ok { "" } else { ", config digest mismatch" },
            match l.log_consistent {
                Some(false) => ", step log disagrees with summary",
                None => ", no step log",
                Some(true) => "",
            },
            crate::output::sig9(l.bound_rhs),
            if l.bound_holds { "holds" } else { "exceeded" },
        );
    }
    lines.iter().all(CheckLine::ok)
}

/// Materialize the environment stream of `config.seed` as a replay file.
pub fn cmd_make_replay(config: &RunConfig, path: &Path) -> Result<()> {
    let mut probe = config.clone();
    probe.horizon = probe.horizon.max(1);
    probe.validate()?;
    if config.env.is_adaptive() {
        bail!(ConfigError::Invalid(
            "an adaptive environment depends on the learner's plays and cannot be exported".into()
        ));
    }
    let grid = ThresholdGrid::uniform(config.k)?;
    let mut env = config.env.build(&grid, config.horizon, config.seed)?;
    let mut truths = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        match env.next_truth(t)? {
            Some(truth) => truths.push(truth),
            None => bail!("source stream ended after {} rows", t - 1),
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_replay(file, &truths)?;
    Ok(())
}

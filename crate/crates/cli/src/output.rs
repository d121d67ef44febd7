use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ocp_core::{RunSummary, StepRecord};

pub const STEP_HEADER: &str = "t,arm,pi,m,loss,set_size,mc_running,ineff_running";

pub const AGGREGATE_HEADER: &str =
    "row,seed,mc,ineff,regret,regret_per_t,c_mc,c_gap_scaled,bound_rhs,vacuous,lemma1_slack,lemma1_pass";

/// Nine significant digits, trailing zeros trimmed.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn steps_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("steps-seed{seed}.csv"))
}

pub fn summary_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("summary-seed{seed}.toml"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_steps(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{STEP_HEADER}")?;
    let (mut misses, mut sizes) = (0u64, 0u64);
    for r in records {
        misses += r.m.as_u8() as u64;
        sizes += r.set_size as u64;
        let t = r.t as f64;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.arm,
            sig9(r.pi),
            r.m.as_u8(),
            sig9(r.loss),
            r.set_size,
            sig9(misses as f64 / t),
            sig9(sizes as f64 / t)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// A parsed per-step row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub t: usize,
    pub arm: usize,
    pub m: u8,
    pub set_size: u32,
}

pub fn read_steps(path: &Path) -> Result<Vec<StepRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    anyhow::ensure!(
        lines.next() == Some(STEP_HEADER),
        "{}: missing step-log header",
        path.display()
    );
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            anyhow::ensure!(f.len() == 8, "{} line {}: expected 8 columns", path.display(), i + 2);
            let parse = || -> Result<StepRow> {
                Ok(StepRow {
                    t: f[0].parse()?,
                    arm: f[1].parse()?,
                    m: f[3].parse()?,
                    set_size: f[5].parse()?,
                })
            };
            parse().with_context(|| format!("{} line {}", path.display(), i + 2))
        })
        .collect()
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let text = toml::to_string(summary).context("serializing summary")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Numeric aggregate columns of one summary, in header order after `seed`.
pub fn aggregate_values(s: &RunSummary) -> [Option<f64>; 10] {
    [
        Some(s.mc),
        Some(s.ineff),
        Some(s.regret),
        Some(s.regret / s.horizon as f64),
        Some(s.c_mc),
        s.c_gap_scaled,
        Some(s.bound_rhs),
        Some(s.vacuous as u8 as f64),
        Some(s.lemma1_slack),
        Some(s.lemma1_pass as u8 as f64),
    ]
}

/// Mean, min and max over the present entries of each column.
pub fn column_stats(rows: &[[Option<f64>; 10]]) -> [[Option<f64>; 10]; 3] {
    let mut stats = [[None; 10]; 3];
    for col in 0..10 {
        let present: Vec<f64> = rows.iter().filter_map(|r| r[col]).collect();
        if present.is_empty() {
            continue;
        }
        stats[0][col] = Some(present.iter().sum::<f64>() / present.len() as f64);
        stats[1][col] = present.iter().copied().reduce(f64::min);
        stats[2][col] = present.iter().copied().reduce(f64::max);
    }
    stats
}

fn cells(values: &[Option<f64>]) -> String {
    values
        .iter()
        .map(|v| v.map(sig9).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(",")
}

/// Per-seed rows sorted by seed, then `mean`, `min` and `max`.
pub fn write_aggregate(path: &Path, summaries: &[RunSummary]) -> Result<()> {
    let mut sorted: Vec<&RunSummary> = summaries.iter().collect();
    sorted.sort_by_key(|s| s.seed);
    let rows: Vec<[Option<f64>; 10]> = sorted.iter().map(|s| aggregate_values(s)).collect();
    let mut out = create(path)?;
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for (s, row) in sorted.iter().zip(&rows) {
        writeln!(out, "run,{},{}", s.seed, cells(row))?;
    }
    let stats = column_stats(&rows);
    for (label, row) in ["mean", "min", "max"].iter().zip(&stats) {
        writeln!(out, "{label},,{}", cells(row))?;
    }
    out.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: &str =
    "value,runs,mc_mean,mc_min,mc_max,ineff_mean,ineff_min,ineff_max,regret_per_t_mean,lemma1_pass_rate";

/// One line per sweep point: coverage and size statistics.
pub fn sweep_row(value: &str, summaries: &[RunSummary]) -> String {
    let rows: Vec<[Option<f64>; 10]> = summaries.iter().map(aggregate_values).collect();
    let st = column_stats(&rows);
    let pick = |s: usize, c: usize| st[s][c];
    format!(
        "{value},{},{}",
        summaries.len(),
        cells(&[
            pick(0, 0),
            pick(1, 0),
            pick(2, 0),
            pick(0, 1),
            pick(1, 1),
            pick(2, 1),
            pick(0, 3),
            pick(0, 9),
        ])
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.15), "0.15");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(2.0 / 3.0 * 1000.0), "666.666667");
        assert_eq!(sig9(-1.0 / 7.0 * 1e-5), "-0.00000142857143");
        assert_eq!(sig9(123456789012.0), "123456789012");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(7.0), "7");
        assert_eq!(sig9(-1e-30), "-0.000000000000000000000000000001");
    }

    #[test]
    fn stats_skip_missing_entries() {
        let mut a = [Some(1.0); 10];
        let mut b = [Some(3.0); 10];
        a[5] = None;
        b[5] = Some(-2.0);
        let st = column_stats(&[a, b]);
        assert_eq!(st[0][0], Some(2.0));
        assert_eq!(st[1][0], Some(1.0));
        assert_eq!(st[2][0], Some(3.0));
        assert_eq!(st[0][5], Some(-2.0));
        assert_eq!(column_stats(&[[None; 10]])[0][0], None);
    }
}

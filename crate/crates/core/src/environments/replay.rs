//! Plain-text score streams.
//!
//! ```text
//! t,f_star,set_sizes
//! 7,0.420000000,1000|800|350|90|3
//! ```
//!
//! `set_sizes` holds exactly K `|`-separated counts aligned with the uniform
//! grid, nonincreasing. `f_star` carries up to nine fractional digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::Path;

use super::{Environment, StepTruth, SCORE_DECIMALS};
use crate::error::{OcpError, Result};

pub const REPLAY_HEADER: &str = "t,f_star,set_sizes";

/// Row-by-row reader over any buffered source.
pub struct ReplayReader<R: BufRead> {
    lines: Lines<R>,
    k: usize,
    line_no: usize,
}

impl<R: BufRead> ReplayReader<R> {
    /// Consume and check the header line.
    pub fn new(source: R, k: usize) -> Result<Self> {
        let mut lines = source.lines();
        match lines.next() {
            Some(Ok(line)) if line.trim_end_matches('\r') == REPLAY_HEADER => Ok(Self {
                lines,
                k,
                line_no: 1,
            }),
            Some(Ok(line)) => Err(OcpError::Parse {
                line: 1,
                message: format!("expected header '{REPLAY_HEADER}', found '{line}'"),
            }),
            Some(Err(e)) => Err(e.into()),
            None => Err(OcpError::Parse {
                line: 1,
                message: "missing header".into(),
            }),
        }
    }

    /// Next row, or `None` at end of stream.
    pub fn next_row(&mut self) -> Result<Option<StepTruth>> {
        let line = match self.lines.next() {
            None => return Ok(None),
            Some(line) => line?,
        };
        self.line_no += 1;
        parse_row(line.trim_end_matches('\r'), self.k, self.line_no).map(Some)
    }
}

fn parse_row(row: &str, k: usize, line: usize) -> Result<StepTruth> {
    let err = |message: String| OcpError::Parse { line, message };
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != 3 {
        return Err(err(format!("expected 3 columns, found {}", fields.len())));
    }
    let t = fields[0]
        .trim()
        .parse::<usize>()
        .map_err(|e| err(format!("bad t '{}': {e}", fields[0])))?;
    let f_star = fields[1]
        .trim()
        .parse::<f64>()
        .map_err(|e| err(format!("bad f_star '{}': {e}", fields[1])))?;
    if !f_star.is_finite() {
        return Err(err(format!("bad f_star '{}'", fields[1])));
    }
    if !(0.0..=1.0).contains(&f_star) {
        return Err(OcpError::Domain {
            name: "f_star",
            value: f_star,
            range: "[0, 1]",
        });
    }
    let set_sizes = fields[2]
        .split('|')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|e| err(format!("bad set size '{s}': {e}")))
        })
        .collect::<Result<Vec<u32>>>()?;
    if set_sizes.len() != k {
        return Err(err(format!(
            "expected {k} set sizes, found {}",
            set_sizes.len()
        )));
    }
    if set_sizes.windows(2).any(|w| w[0] < w[1]) {
        return Err(err("set sizes must be nonincreasing".into()));
    }
    Ok(StepTruth { t, f_star, set_sizes })
}

/// Environment that replays a file.
pub struct ReplayEnv {
    reader: ReplayReader<BufReader<File>>,
}

impl ReplayEnv {
    pub fn open(path: &Path, k: usize) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| OcpError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            reader: ReplayReader::new(BufReader::new(file), k)?,
        })
    }
}

impl Environment for ReplayEnv {
    fn next_truth(&mut self, _t: usize) -> Result<Option<StepTruth>> {
        self.reader.next_row()
    }
}

fn format_row(truth: &StepTruth) -> String {
    let sizes: Vec<String> = truth.set_sizes.iter().map(u32::to_string).collect();
    format!(
        "{},{:.*},{}",
        truth.t,
        SCORE_DECIMALS as usize,
        truth.f_star,
        sizes.join("|")
    )
}

/// Write `truths` to `out` in replay format.
pub fn write_replay<'a, W, I>(out: W, truths: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a StepTruth>,
{
    let mut out = BufWriter::new(out);
    writeln!(out, "{REPLAY_HEADER}")?;
    for truth in truths {
        writeln!(out, "{}", format_row(truth))?;
    }
    out.flush()?;
    Ok(())
}

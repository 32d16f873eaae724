use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::Serialize;

/// One CSV line: a policy at one density band.
///
/// Means that do not apply to an experiment are left empty. A band no trial
/// reached has `trials = 0` and empty means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub policy: String,
    pub ghosts: bool,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub density: f64,
    pub bins_viewed_mean: Option<f64>,
    pub chain_len_mean: Option<f64>,
    pub spawns_mean: Option<f64>,
    pub aborts: Option<u64>,
    pub trials: usize,
    pub seed: u64,
}

/// Writes a header and one line per row.
pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    ensure!(!rows.is_empty(), "nothing to write");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(rows, file).with_context(|| format!("writing {}", path.display()))
}

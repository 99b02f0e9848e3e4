use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{at_path, Error, Result};
use crate::metrics::RunOutcome;

/// One optimization run. Serialized as a single JSON line.
///
/// `wall_time` is kept out of the record line so record files stay
/// byte-identical across reruns; it is written to a separate timings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_id: String,
    pub alpha: f64,
    pub shots: usize,
    pub run_index: usize,
    pub seed: u64,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<RunOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some() || self.outcome.is_none()
    }

    pub fn key(&self) -> (String, usize) {
        (self.config_id.clone(), self.run_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLine {
    pub config_id: String,
    pub run_index: usize,
    pub wall_time: f64,
}

/// Reads a JSON Lines record file. A torn final line (from an interrupted
/// append) is ignored; malformed lines elsewhere are errors.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let reader = BufReader::new(File::open(path).map_err(at_path(path))?);
    let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
    let last = lines.len().saturating_sub(1);
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i == last => break,
            Err(e) => {
                return Err(Error::InvalidInput(format!(
                    "{}:{}: bad record: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Writes records one per line, in the given order.
pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(at_path(path))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

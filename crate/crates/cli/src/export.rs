use std::path::{Path, PathBuf};

use crate::error::HarnessError;
use crate::runner::{load_artifacts, RunArtifact};

pub const TRACE_COLUMNS: [&str; 6] = ["benchmark", "strategy", "seed", "eval_index", "value", "best_seen"];

/// One CSV row per evaluation, ordered by benchmark, strategy, seed and
/// evaluation index. `best_seen` is empty before the first success.
pub fn write_traces<W: std::io::Write>(artifacts: &[RunArtifact], w: W) -> Result<usize, HarnessError> {
    let mut sorted: Vec<&RunArtifact> = artifacts.iter().collect();
    sorted.sort_by(|a, b| {
        (a.benchmark(), a.strategy().as_str(), a.seed).cmp(&(b.benchmark(), b.strategy().as_str(), b.seed))
    });
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TRACE_COLUMNS)?;
    let mut rows = 0;
    for a in sorted {
        for (obs, best) in a.trace.observations.iter().zip(&a.trace.best_seen) {
            csv.write_record([
                a.benchmark().to_string(),
                a.strategy().as_str().to_string(),
                a.seed.to_string(),
                obs.eval_index.to_string(),
                obs.value.to_string(),
                best.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
            rows += 1;
        }
    }
    csv.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(rows)
}

pub fn export_traces(dirs: &[PathBuf], path: &Path) -> Result<usize, HarnessError> {
    let artifacts = load_artifacts(dirs)?;
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_traces(&artifacts, std::io::BufWriter::new(file))
}

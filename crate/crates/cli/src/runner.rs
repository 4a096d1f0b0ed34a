use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hypertune_core::{run_loop, BayesOptions, Configuration, EvalError, Trace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StrategyChoice};
use crate::error::HarnessError;
use crate::registry::{build_objective, load_dataset, registry_lookup, Objective};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Persisted result of one seed of an experiment. Contains no wall-clock
/// data, so equal inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub trace: Trace,
    pub best_config: Option<Configuration>,
}

impl RunArtifact {
    pub fn benchmark(&self) -> &str {
        &self.config.benchmark
    }

    pub fn strategy(&self) -> StrategyChoice {
        self.config.strategy
    }
}

/// Per-evaluation wall-clock seconds, stored beside the artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub seed: u64,
    pub eval_seconds: Vec<f64>,
    pub total_seconds: f64,
}

pub fn run_dir(out: &Path, benchmark: &str, strategy: StrategyChoice) -> PathBuf {
    out.join(benchmark).join(strategy.as_str())
}

pub fn artifact_path(out: &Path, benchmark: &str, strategy: StrategyChoice, seed: u64) -> PathBuf {
    run_dir(out, benchmark, strategy).join(format!("seed-{seed}.json"))
}

pub fn timing_path(out: &Path, benchmark: &str, strategy: StrategyChoice, seed: u64) -> PathBuf {
    run_dir(out, benchmark, strategy).join(format!("seed-{seed}.timing.json"))
}

/// Writes via a temporary file and rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn ensure_writable(dir: &Path) -> Result<(), HarnessError> {
    let err = |e| HarnessError::Unwritable {
        path: dir.to_path_buf(),
        source: e,
    };
    fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(err)?;
    fs::remove_file(&probe).map_err(err)
}

/// Runs one seed against an already-built objective.
pub fn run_seed(cfg: &ExperimentConfig, objective: &Objective, seed: u64) -> Result<(RunArtifact, RunTiming), HarnessError> {
    let entry = registry_lookup(&cfg.benchmark)?;
    let started = Instant::now();
    let mut trace = match cfg.strategy.kind() {
        Some(kind) => {
            let fixed: Vec<&str> = cfg.overrides.iter().map(|(k, _)| k.as_str()).collect();
            let space = entry.space.without(&fixed);
            let overrides = cfg.overrides.clone();
            let eval = |c: &Configuration| -> Result<f64, EvalError> { objective(&c.clone().merged(&overrides)) };
            run_loop(kind, &space, eval, cfg.budget, seed, &BayesOptions::default())
        }
        None => {
            let config = entry.untuned.clone();
            let t = Instant::now();
            let outcome = objective(&config.clone().merged(&cfg.overrides));
            let outcome = match outcome {
                Ok(v) if !v.is_finite() => Err(EvalError(format!("non-finite objective value {v}"))),
                other => other,
            };
            let mut trace = Trace::new(cfg.strategy.as_str(), seed);
            trace.push(config, outcome, -1.0, t.elapsed().as_secs_f64());
            trace
        }
    };
    for obs in &mut trace.observations {
        obs.config = std::mem::take(&mut obs.config).merged(&cfg.overrides);
    }
    let best_config = trace.best_observation().map(|o| o.config.clone());
    let timing = RunTiming {
        seed,
        eval_seconds: trace.wall_times.clone(),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let artifact = RunArtifact {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.clone(),
        seed,
        trace,
        best_config,
    };
    Ok((artifact, timing))
}

pub fn artifact_json(artifact: &RunArtifact) -> Result<Vec<u8>, HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(artifact)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Runs every seed (in parallel) and writes
/// `<out>/<benchmark>/<strategy>/seed-<s>.json` plus a timing sidecar.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunArtifact>, HarnessError> {
    cfg.validate()?;
    let dir = run_dir(out, &cfg.benchmark, cfg.strategy);
    ensure_writable(&dir)?;
    let dataset = load_dataset(&cfg.benchmark, &cfg.dataset)?;
    let objective = build_objective(&cfg.benchmark, dataset, cfg.objective_seed)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let (artifact, timing) = run_seed(cfg, &objective, seed)?;
            write_atomic(&artifact_path(out, &cfg.benchmark, cfg.strategy, seed), &artifact_json(&artifact)?)?;
            let mut t = serde_json::to_vec_pretty(&timing)?;
            t.push(b'\n');
            write_atomic(&timing_path(out, &cfg.benchmark, cfg.strategy, seed), &t)?;
            Ok(artifact)
        })
        .collect()
}

pub fn read_artifact(path: &Path) -> Result<RunArtifact, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| HarnessError::Artifact {
        path: path.to_path_buf(),
        source: e,
    })
}

fn is_artifact_name(name: &str) -> bool {
    name.starts_with("seed-") && name.ends_with(".json") && !name.ends_with(".timing.json")
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let io = |e| HarnessError::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.file_name().and_then(|n| n.to_str()).is_some_and(is_artifact_name) {
            out.push(p);
        }
    }
    Ok(())
}

/// All artifacts under the given directories (searched recursively), in
/// argument order and then path order; a directory listed twice is read once.
pub fn load_artifacts(dirs: &[PathBuf]) -> Result<Vec<RunArtifact>, HarnessError> {
    let mut files = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(HarnessError::InvalidConfig(format!("{} is not a directory", d.display())));
        }
        collect_files(d, &mut files)?;
    }
    let mut seen = std::collections::HashSet::new();
    files.retain(|f| seen.insert(f.canonicalize().unwrap_or_else(|_| f.clone())));
    if files.is_empty() {
        let names: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
        return Err(HarnessError::NoArtifacts(names.join(", ")));
    }
    files.iter().map(|f| read_artifact(f)).collect()
}

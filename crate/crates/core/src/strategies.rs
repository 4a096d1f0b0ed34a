//! Sequential suggest/observe search loop with random, grid and GP-EI
//! Bayesian strategies. Strategies always maximize; callers negate
//! minimization objectives.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::GpModel;
use crate::space::{Configuration, ParamSpace};
use crate::{seeded_rng, SeededRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("budget exceeds grid size ({0} configurations)")]
    GridExhausted(usize),
    #[error("unknown strategy `{0}` (expected one of: random, grid, bayes)")]
    UnknownKind(String),
    #[error(transparent)]
    Space(#[from] crate::space::SpaceError),
}

/// Failure reported by an objective for one configuration.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct EvalError(pub String);

impl EvalError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Grid,
    Bayes,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Random, StrategyKind::Grid, StrategyKind::Bayes];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Grid => "grid",
            StrategyKind::Bayes => "bayes",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(StrategyKind::Random),
            "grid" => Ok(StrategyKind::Grid),
            "bayes" => Ok(StrategyKind::Bayes),
            other => Err(StrategyError::UnknownKind(other.to_string())),
        }
    }
}

/// Tuning knobs of the GP-EI strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesOptions {
    /// EI exploration bonus, in standardized target units.
    pub xi: f64,
    pub candidates_per_suggest: usize,
    pub local_candidates: usize,
    pub local_sigma: f64,
    pub gp_restarts: usize,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self {
            xi: 0.01,
            candidates_per_suggest: 2048,
            local_candidates: 64,
            local_sigma: 0.05,
            gp_restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Configuration,
    /// Objective value; for failed evaluations the imputed surrogate value.
    pub value: f64,
    pub eval_index: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Evaluation history of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub strategy: String,
    pub seed: u64,
    pub observations: Vec<Observation>,
    /// Running maximum over successful evaluations; `None` until the first
    /// success.
    pub best_seen: Vec<Option<f64>>,
    /// Seconds per evaluation. Not persisted with the trace.
    #[serde(skip)]
    pub wall_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted: Option<String>,
}

impl Trace {
    pub fn new(strategy: impl Into<String>, seed: u64) -> Self {
        Self {
            strategy: strategy.into(),
            seed,
            observations: Vec::new(),
            best_seen: Vec::new(),
            wall_times: Vec::new(),
            halted: None,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn final_best(&self) -> Option<f64> {
        self.best_seen.last().copied().flatten()
    }

    /// The successful observation holding the final best value (first one on ties).
    pub fn best_observation(&self) -> Option<&Observation> {
        let best = self.final_best()?;
        self.observations.iter().find(|o| !o.failed && o.value == best)
    }

    pub fn push(&mut self, config: Configuration, outcome: Result<f64, EvalError>, imputed: f64, seconds: f64) {
        let prev = self.best_seen.last().copied().flatten();
        let eval_index = self.observations.len();
        let obs = match outcome {
            Ok(v) => Observation {
                config,
                value: v,
                eval_index,
                failed: false,
                error: None,
            },
            Err(e) => Observation {
                config,
                value: imputed,
                eval_index,
                failed: true,
                error: Some(e.0),
            },
        };
        let best = if obs.failed {
            prev
        } else {
            Some(prev.map_or(obs.value, |p| p.max(obs.value)))
        };
        self.observations.push(obs);
        self.best_seen.push(best);
        self.wall_times.push(seconds);
    }
}

/// One observed evaluation as the strategy sees it (failed ones imputed).
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub config: Configuration,
    pub value: f64,
    pub failed: bool,
}

/// Internal state of a search strategy.
#[derive(Debug, Clone)]
pub enum StrategyState {
    Random {
        rng: SeededRng,
        history: Vec<HistoryEntry>,
    },
    Grid {
        queue: Vec<Configuration>,
        cursor: usize,
        history: Vec<HistoryEntry>,
    },
    Bayes {
        init_design: Vec<Configuration>,
        history: Vec<HistoryEntry>,
        options: BayesOptions,
        rng: SeededRng,
    },
}

impl StrategyState {
    /// Fresh state; `budget` sizes the grid for [`StrategyKind::Grid`].
    pub fn new(kind: StrategyKind, space: &ParamSpace, budget: usize, seed: u64, options: BayesOptions) -> Self {
        let mut rng = seeded_rng(seed);
        match kind {
            StrategyKind::Random => StrategyState::Random {
                rng,
                history: Vec::new(),
            },
            StrategyKind::Grid => StrategyState::Grid {
                queue: space.grid(budget.max(1), &mut rng),
                cursor: 0,
                history: Vec::new(),
            },
            StrategyKind::Bayes => {
                let d = space.unit_dim();
                let size = (2 * d).max(4);
                let design = latin_hypercube(size, d, &mut rng)
                    .iter()
                    .map(|u| space.from_unit(u).expect("design matches unit dimension"))
                    .collect();
                StrategyState::Bayes {
                    init_design: design,
                    history: Vec::new(),
                    options,
                    rng,
                }
            }
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategyState::Random { .. } => StrategyKind::Random,
            StrategyState::Grid { .. } => StrategyKind::Grid,
            StrategyState::Bayes { .. } => StrategyKind::Bayes,
        }
    }

    pub fn history(&self) -> &[HistoryEntry] {
        match self {
            StrategyState::Random { history, .. }
            | StrategyState::Grid { history, .. }
            | StrategyState::Bayes { history, .. } => history,
        }
    }

    pub fn history_len(&self) -> usize {
        self.history().len()
    }

    /// Remaining Latin-hypercube points (Bayes only; empty otherwise).
    pub fn pending_design(&self) -> &[Configuration] {
        match self {
            StrategyState::Bayes { init_design, .. } => init_design,
            _ => &[],
        }
    }

    pub fn suggest(&mut self, space: &ParamSpace) -> Result<Configuration, StrategyError> {
        match self {
            StrategyState::Random { rng, .. } => Ok(space.sample_uniform(rng)),
            StrategyState::Grid { queue, cursor, .. } => {
                let c = queue.get(*cursor).cloned().ok_or(StrategyError::GridExhausted(queue.len()))?;
                *cursor += 1;
                Ok(c)
            }
            StrategyState::Bayes {
                init_design,
                history,
                options,
                rng,
            } => {
                if !init_design.is_empty() {
                    return Ok(init_design.remove(0));
                }
                bayes_suggest(space, history, options, rng)
            }
        }
    }

    /// Value a failed evaluation is imputed with: one unit below the worst
    /// value seen so far.
    pub fn imputed_failure_value(&self) -> f64 {
        self.history()
            .iter()
            .map(|h| h.value)
            .min_by(|a, b| a.total_cmp(b))
            .unwrap_or(0.0)
            - 1.0
    }

    /// Records the outcome of evaluating `config`.
    pub fn observe(&mut self, config: Configuration, outcome: Option<f64>) {
        let imputed = self.imputed_failure_value();
        let (value, failed) = match outcome {
            Some(v) if v.is_finite() => (v, false),
            _ => (imputed, true),
        };
        let entry = HistoryEntry { config, value, failed };
        match self {
            StrategyState::Random { history, .. }
            | StrategyState::Grid { history, .. }
            | StrategyState::Bayes { history, .. } => history.push(entry),
        }
    }
}

fn bayes_suggest(
    space: &ParamSpace,
    history: &[HistoryEntry],
    options: &BayesOptions,
    rng: &mut SeededRng,
) -> Result<Configuration, StrategyError> {
    let d = space.unit_dim();
    if history.len() < 2 || d == 0 {
        return Ok(space.sample_uniform(rng));
    }
    let inputs = history
        .iter()
        .map(|h| space.to_unit(&h.config))
        .collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<f64> = history.iter().map(|h| h.value).collect();
    let model = match GpModel::fit(inputs.clone(), &targets, options.gp_restarts, rng) {
        Ok(m) => m,
        Err(_) => return Ok(space.sample_uniform(rng)),
    };
    let (incumbent, best) = history
        .iter()
        .enumerate()
        .filter(|(_, h)| !h.failed)
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value).then(b.0.cmp(&a.0)))
        .map(|(i, h)| (i, h.value))
        .unwrap_or((0, targets[0]));
    let xi = options.xi * model.target_sd();

    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(options.candidates_per_suggest + options.local_candidates);
    for _ in 0..options.candidates_per_suggest {
        candidates.push((0..d).map(|_| rng.random::<f64>()).collect());
    }
    let jitter = Normal::new(0.0, options.local_sigma).expect("positive sigma");
    for _ in 0..options.local_candidates {
        candidates.push(
            inputs[incumbent]
                .iter()
                .map(|&u| (u + jitter.sample(rng)).clamp(0.0, 1.0))
                .collect(),
        );
    }

    let mut best_pick: Option<(f64, Configuration)> = None;
    for cand in &candidates {
        let config = space.from_unit(cand)?;
        if history.iter().any(|h| h.config == config) {
            continue;
        }
        let snapped = space.to_unit(&config)?;
        let ei = model.expected_improvement(&snapped, best, xi, true);
        if best_pick.as_ref().is_none_or(|(b, _)| ei > *b) {
            best_pick = Some((ei, config));
        }
    }
    match best_pick {
        Some((_, c)) => Ok(c),
        None => Ok(space.from_unit(&candidates[0])?),
    }
}

/// Latin hypercube design of `n` points in `[0,1]^d`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, p) in points.iter_mut().enumerate() {
            p[j] = (strata[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Runs `budget` sequential evaluations of `objective` under one strategy.
///
/// Objective failures and non-finite values become failed observations and
/// the loop continues. A hard strategy fault (grid exhaustion) halts the
/// run early and is recorded in [`Trace::halted`].
pub fn run_loop<F>(
    kind: StrategyKind,
    space: &ParamSpace,
    mut objective: F,
    budget: usize,
    seed: u64,
    options: &BayesOptions,
) -> Trace
where
    F: FnMut(&Configuration) -> Result<f64, EvalError>,
{
    let mut state = StrategyState::new(kind, space, budget, seed, options.clone());
    let mut trace = Trace::new(kind.as_str(), seed);
    for _ in 0..budget {
        let config = match state.suggest(space) {
            Ok(c) => c,
            Err(e) => {
                trace.halted = Some(e.to_string());
                break;
            }
        };
        let start = Instant::now();
        let outcome = match objective(&config) {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(EvalError(format!("non-finite objective value {v}"))),
            Err(e) => Err(e),
        };
        let seconds = start.elapsed().as_secs_f64();
        let imputed = state.imputed_failure_value();
        state.observe(config.clone(), outcome.as_ref().ok().copied());
        trace.push(config, outcome, imputed, seconds);
    }
    trace
}

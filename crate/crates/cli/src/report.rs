use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hypertune_core::evalstat::{iqr_trace, mann_whitney_u, relative_improvement, summarize, QuantileBand, Summary, UTestMethod};
use hypertune_core::Trace;
use serde::{Deserialize, Serialize};

use crate::config::StrategyChoice;
use crate::error::HarnessError;
use crate::runner::{load_artifacts, RunArtifact};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub runs: usize,
    pub budget: usize,
    /// Summary of final best-found values (absent if no run succeeded).
    pub best_found: Option<Summary<f64>>,
    /// Percent change of the mean best-found value against the baseline's.
    pub improvement_pct: Option<f64>,
    pub iqr: Vec<Option<QuantileBand>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub a: String,
    pub b: String,
    pub u_statistic: f64,
    pub p_two_sided: f64,
    pub method: UTestMethod,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub benchmark: String,
    pub baseline: String,
    pub alpha_level: f64,
    pub strategies: Vec<StrategyRow>,
    pub pairwise: Vec<PairwiseRow>,
}

struct Group {
    strategy: StrategyChoice,
    budget: usize,
    traces: Vec<Trace>,
}

fn final_bests(traces: &[Trace]) -> Vec<f64> {
    traces.iter().filter_map(Trace::final_best).collect()
}

/// One report per benchmark, strategies in order of first appearance.
///
/// The baseline defaults to `default` when present, else the first strategy.
/// Budgets must agree across the searching strategies; the `default`
/// baseline (a single evaluation) is exempt.
pub fn compare(artifacts: &[RunArtifact], baseline: Option<&str>, alpha_level: f64) -> Result<Vec<ComparisonReport>, HarnessError> {
    let mut benches: Vec<(String, Vec<Group>)> = Vec::new();
    for a in artifacts {
        let bench = match benches.iter_mut().position(|(b, _)| b == a.benchmark()) {
            Some(i) => &mut benches[i].1,
            None => {
                benches.push((a.benchmark().to_string(), Vec::new()));
                &mut benches.last_mut().expect("just pushed").1
            }
        };
        match bench.iter_mut().find(|g| g.strategy == a.strategy()) {
            Some(g) => {
                if g.budget != a.config.budget && a.strategy() != StrategyChoice::Default {
                    return Err(HarnessError::BudgetMismatch {
                        benchmark: a.benchmark().to_string(),
                        detail: format!("{} has budgets {} and {}", a.strategy(), g.budget, a.config.budget),
                    });
                }
                g.traces.push(a.trace.clone());
            }
            None => bench.push(Group {
                strategy: a.strategy(),
                budget: a.config.budget,
                traces: vec![a.trace.clone()],
            }),
        }
    }

    let mut reports = Vec::with_capacity(benches.len());
    for (benchmark, groups) in benches {
        let searching: Vec<&Group> = groups.iter().filter(|g| g.strategy != StrategyChoice::Default).collect();
        if let Some(first) = searching.first() {
            if searching.iter().any(|g| g.budget != first.budget) {
                let detail: Vec<String> = searching.iter().map(|g| format!("{}={}", g.strategy, g.budget)).collect();
                return Err(HarnessError::BudgetMismatch {
                    benchmark,
                    detail: detail.join(", "),
                });
            }
        }
        let base_name = match baseline {
            Some(b) => {
                if !groups.iter().any(|g| g.strategy.as_str() == b) {
                    return Err(HarnessError::MissingBaseline(b.to_string()));
                }
                b.to_string()
            }
            None if groups.iter().any(|g| g.strategy == StrategyChoice::Default) => "default".to_string(),
            None => groups[0].strategy.as_str().to_string(),
        };
        let summaries: Vec<Option<Summary<f64>>> = groups.iter().map(|g| summarize(&final_bests(&g.traces)).ok()).collect();
        let base_mean = groups
            .iter()
            .zip(&summaries)
            .find(|(g, _)| g.strategy.as_str() == base_name)
            .and_then(|(_, s)| s.map(|s| s.mean));

        let strategies = groups
            .iter()
            .zip(&summaries)
            .map(|(g, s)| StrategyRow {
                strategy: g.strategy.as_str().to_string(),
                runs: g.traces.len(),
                budget: g.budget,
                best_found: *s,
                improvement_pct: match (s, base_mean) {
                    (Some(s), Some(b)) if b != 0.0 => Some(relative_improvement(s.mean, b)),
                    _ => None,
                },
                iqr: iqr_trace(&g.traces),
            })
            .collect();

        let mut pairwise = Vec::new();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let (a, b) = (final_bests(&groups[i].traces), final_bests(&groups[j].traces));
                if let Ok(r) = mann_whitney_u(&a, &b) {
                    pairwise.push(PairwiseRow {
                        a: groups[i].strategy.as_str().to_string(),
                        b: groups[j].strategy.as_str().to_string(),
                        u_statistic: r.u_statistic,
                        p_two_sided: r.p_two_sided,
                        method: r.method,
                        significant: r.p_two_sided < alpha_level,
                    });
                }
            }
        }
        reports.push(ComparisonReport {
            benchmark,
            baseline: base_name,
            alpha_level,
            strategies,
            pairwise,
        });
    }
    Ok(reports)
}

pub fn compare_dirs(dirs: &[PathBuf], baseline: Option<&str>, alpha_level: f64) -> Result<Vec<ComparisonReport>, HarnessError> {
    compare(&load_artifacts(dirs)?, baseline, alpha_level)
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Aligned plain-text tables.
pub fn render_text(reports: &[ComparisonReport]) -> String {
    let mut out = String::new();
    for (k, r) in reports.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "benchmark: {}  (baseline: {})", r.benchmark, r.baseline);
        let header = ["strategy", "runs", "budget", "mean", "median", "sd", "vs baseline"];
        let rows: Vec<[String; 7]> = r
            .strategies
            .iter()
            .map(|s| {
                [
                    s.strategy.clone(),
                    s.runs.to_string(),
                    s.budget.to_string(),
                    num(s.best_found.map(|b| b.mean)),
                    num(s.best_found.map(|b| b.median)),
                    num(s.best_found.map(|b| b.sd)),
                    s.improvement_pct.map_or_else(|| "-".to_string(), |p| format!("{p:+.2}%")),
                ]
            })
            .collect();
        write_table(&mut out, &header, &rows);
        if !r.pairwise.is_empty() {
            let _ = writeln!(out, "pairwise Mann-Whitney U (two-sided, alpha {}):", r.alpha_level);
            let header = ["a", "b", "U", "p", "method", ""];
            let rows: Vec<[String; 6]> = r
                .pairwise
                .iter()
                .map(|p| {
                    [
                        p.a.clone(),
                        p.b.clone(),
                        format!("{:.1}", p.u_statistic),
                        format!("{:.4}", p.p_two_sided),
                        match p.method {
                            UTestMethod::Exact => "exact".to_string(),
                            UTestMethod::NormalApprox => "normal".to_string(),
                        },
                        if p.significant { "*".to_string() } else { String::new() },
                    ]
                })
                .collect();
            write_table(&mut out, &header, &rows);
        }
    }
    out
}

fn write_table<const N: usize>(out: &mut String, header: &[&str; N], rows: &[[String; N]]) {
    let mut widths: [usize; N] = header.map(str::len);
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header.to_vec()));
    for row in rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
}

pub fn write_json(reports: &[ComparisonReport], path: &Path) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(reports)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

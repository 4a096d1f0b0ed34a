//! Cross-seed comparison statistics: best-found summaries, interquartile
//! best-seen bands, relative improvement and the Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{norm_sf, Scalar};
use crate::strategies::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("each sample needs at least 2 values (got {0} and {1})")]
    SampleTooSmall(usize, usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("no values to summarize")]
    Empty,
}

/// Largest pooled sample size for which the exact null distribution is enumerated.
pub const EXACT_MAX_POOLED: usize = 16;
/// Most tied groups the exact path accepts.
pub const EXACT_MAX_TIE_GROUPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UTestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult<T> {
    /// U statistic of the first sample.
    pub u_statistic: T,
    pub p_two_sided: T,
    pub method: UTestMethod,
}

/// Midranks (1-based) of `values`; ties share the average of their ranks.
pub fn midranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank ((i+1)+(j+1))/2
        let r = T::from_usize_lossy(i + j + 2) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tied groups (only groups with more than one member).
fn tie_sizes<T: Scalar>(values: &[T]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            out.push(j - i + 1);
        }
        i = j + 1;
    }
    out
}

/// Unpaired two-sided Mann-Whitney U test of `a` against `b`.
///
/// Exact when the pooled size is at most 16 with no more than two tied
/// groups (full enumeration of label assignments over the midranks);
/// otherwise the normal approximation with tie-corrected variance and a
/// 0.5 continuity correction.
pub fn mann_whitney_u<T: Scalar>(a: &[T], b: &[T]) -> Result<UTestResult<T>, StatError> {
    let (n, m) = (a.len(), b.len());
    if n < 2 || m < 2 {
        return Err(StatError::SampleTooSmall(n, m));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatError::NonFinite);
    }
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let nf = T::from_usize_lossy(n);
    let mf = T::from_usize_lossy(m);
    let rank_sum_a: T = ranks[..n].iter().copied().sum();
    let u = rank_sum_a - nf * (nf + T::one()) / T::lit(2.0);
    let center = nf * mf / T::lit(2.0);

    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(UTestResult {
            u_statistic: u,
            p_two_sided: T::one(),
            method: UTestMethod::Exact,
        });
    }

    let ties = tie_sizes(&pooled);
    let total = n + m;
    if total <= EXACT_MAX_POOLED && ties.len() <= EXACT_MAX_TIE_GROUPS {
        let observed = (u - center).abs();
        let tol = T::lit(1e-9);
        let offset = nf * (nf + T::one()) / T::lit(2.0);
        let (mut hits, mut count) = (0u64, 0u64);
        for mask in 0u32..(1u32 << total) {
            if mask.count_ones() as usize != n {
                continue;
            }
            let mut s = T::zero();
            for (k, &r) in ranks.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    s += r;
                }
            }
            count += 1;
            if ((s - offset) - center).abs() >= observed - tol {
                hits += 1;
            }
        }
        let p = T::lit(hits as f64) / T::lit(count as f64);
        return Ok(UTestResult {
            u_statistic: u,
            p_two_sided: p.min(T::one()),
            method: UTestMethod::Exact,
        });
    }

    let nt = T::from_usize_lossy(total);
    let tie_term: T = ties
        .iter()
        .map(|&t| {
            let t = T::from_usize_lossy(t);
            t * t * t - t
        })
        .sum::<T>()
        / (nt * (nt - T::one()));
    let var = nf * mf / T::lit(12.0) * ((nt + T::one()) - tie_term);
    let dev = (u - center).abs() - T::lit(0.5);
    let p = if dev <= T::zero() || !(var > T::zero()) {
        T::one()
    } else {
        (T::lit(2.0) * norm_sf(dev / var.sqrt())).min(T::one())
    };
    Ok(UTestResult {
        u_statistic: u,
        p_two_sided: p,
        method: UTestMethod::NormalApprox,
    })
}

/// Linear-interpolation quantile of already sorted data, `q` in `[0,1]`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q * T::from_usize_lossy(sorted.len() - 1);
    let lo = pos.floor();
    let i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    let j = (i + 1).min(sorted.len() - 1);
    let frac = pos - lo;
    sorted[i] + (sorted[j] - sorted[i]) * frac
}

/// Linear-interpolation percentile (`p` in `[0,100]`) of unsorted data.
pub fn percentile<T: Scalar>(values: &[T], p: T) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&v, p / T::lit(100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub n: usize,
    pub mean: T,
    pub median: T,
    /// Sample standard deviation (0 for a single value).
    pub sd: T,
}

pub fn summarize<T: Scalar>(values: &[T]) -> Result<Summary<T>, StatError> {
    if values.is_empty() {
        return Err(StatError::Empty);
    }
    let n = values.len();
    let nf = T::from_usize_lossy(n);
    if values.iter().all(|&v| v == values[0]) {
        return Ok(Summary {
            n,
            mean: values[0],
            median: values[0],
            sd: T::zero(),
        });
    }
    let mean = values.iter().copied().sum::<T>() / nf;
    let sd = if n > 1 {
        (values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (nf - T::one())).sqrt()
    } else {
        T::zero()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(Summary {
        n,
        mean,
        median: quantile_sorted(&sorted, T::lit(0.5)),
        sd,
    })
}

/// Percent change of `value` relative to `baseline`.
pub fn relative_improvement<T: Scalar>(value: T, baseline: T) -> T {
    T::lit(100.0) * (value - baseline) / baseline.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileBand {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Per-evaluation quartiles of best-seen values across traces.
///
/// Traces without a successful value yet at an index are left out there;
/// an index where none has one yields `None`.
pub fn iqr_trace(traces: &[Trace]) -> Vec<Option<QuantileBand>> {
    let len = traces.iter().map(|t| t.best_seen.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let mut vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| t.best_seen.get(i).copied().flatten())
                .collect();
            if vals.is_empty() {
                return None;
            }
            vals.sort_by(|a, b| a.total_cmp(b));
            Some(QuantileBand {
                q25: quantile_sorted(&vals, 0.25),
                median: quantile_sorted(&vals, 0.5),
                q75: quantile_sorted(&vals, 0.75),
            })
        })
        .collect()
}

/// Traces of one benchmark grouped by strategy, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct RunSet {
    pub benchmark: String,
    pub groups: Vec<(String, Vec<Trace>)>,
}

impl RunSet {
    pub fn new(benchmark: impl Into<String>) -> Self {
        Self {
            benchmark: benchmark.into(),
            groups: Vec::new(),
        }
    }

    pub fn add(&mut self, trace: Trace) {
        match self.groups.iter_mut().find(|(s, _)| *s == trace.strategy) {
            Some((_, v)) => v.push(trace),
            None => self.groups.push((trace.strategy.clone(), vec![trace])),
        }
    }

    pub fn traces(&self, strategy: &str) -> Option<&[Trace]> {
        self.groups.iter().find(|(s, _)| s == strategy).map(|(_, v)| v.as_slice())
    }

    /// Final best-seen values of a strategy's runs (runs with no success skipped).
    pub fn final_bests(&self, strategy: &str) -> Vec<f64> {
        self.traces(strategy)
            .unwrap_or(&[])
            .iter()
            .filter_map(Trace::final_best)
            .collect()
    }

    /// Per-strategy summary of final best-seen values.
    pub fn best_found_summary(&self) -> Vec<(String, Result<Summary<f64>, StatError>)> {
        self.groups
            .iter()
            .map(|(s, _)| (s.clone(), summarize(&self.final_bests(s))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;

    /// U by direct pair counting and exact p by enumerating every split of
    /// the pooled raw values.
    fn brute_force(a: &[f64], b: &[f64]) -> (f64, f64) {
        let u_of = |x: &[f64], y: &[f64]| -> f64 {
            let mut u = 0.0;
            for &p in x {
                for &q in y {
                    if p > q {
                        u += 1.0;
                    } else if p == q {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let (n, m) = (a.len(), b.len());
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let center = (n * m) as f64 / 2.0;
        let obs = (u_of(a, b) - center).abs();
        let mut idx: Vec<usize> = (0..n).collect();
        let (mut hits, mut total) = (0u64, 0u64);
        loop {
            let x: Vec<f64> = idx.iter().map(|&i| pooled[i]).collect();
            let y: Vec<f64> = (0..n + m).filter(|i| !idx.contains(i)).map(|i| pooled[i]).collect();
            total += 1;
            if (u_of(&x, &y) - center).abs() >= obs - 1e-9 {
                hits += 1;
            }
            // next combination
            let mut k = n;
            loop {
                if k == 0 {
                    return (u_of(a, b), hits as f64 / total as f64);
                }
                k -= 1;
                if idx[k] < n + m - (n - k) {
                    idx[k] += 1;
                    for t in k + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn separated_samples_exact_p() {
        let r = mann_whitney_u(&[1.0_f64, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.method, UTestMethod::Exact);
        assert!((r.p_two_sided - 0.1).abs() < 1e-12);
    }

    #[test]
    fn same_multiset_p_one() {
        let r = mann_whitney_u(&[3.0_f64, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.p_two_sided - 1.0).abs() < 1e-12);
        let r = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.method, UTestMethod::Exact);
    }

    #[test]
    fn exact_matches_enumeration_oracle() {
        let mut rng = seeded_rng(21);
        for _ in 0..60 {
            let n = rng.random_range(2..=6);
            let m = rng.random_range(2..=6);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(0..12) as f64).collect();
            let r = mann_whitney_u(&a, &b).unwrap();
            let (u, p) = brute_force(&a, &b);
            assert!((r.u_statistic - u).abs() < 1e-12);
            if r.method == UTestMethod::Exact {
                assert!((r.p_two_sided - p).abs() < 1e-12, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = [0.3_f64, 0.9, 0.5, 0.7];
        let b = [0.1, 0.2, 0.6, 0.4, 0.8];
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        assert!((ab.u_statistic + ba.u_statistic - 20.0).abs() < 1e-12);
        assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
    }

    #[test]
    fn large_samples_use_normal_approx() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 + 5.5).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, UTestMethod::NormalApprox);
        assert!(r.p_two_sided > 0.0 && r.p_two_sided < 0.05);
    }

    #[test]
    fn too_small_is_an_error() {
        assert_eq!(mann_whitney_u(&[1.0], &[1.0, 2.0]), Err(StatError::SampleTooSmall(1, 2)));
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn quartiles_by_interpolation() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.75), 3.25);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 50.0), 2.5);
    }

    #[test]
    fn summary_cases() {
        let s = summarize(&[0.1_f64, 0.2, 0.3]).unwrap();
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert_eq!(s.median, 0.2);
        let s = summarize(&[0.7]).unwrap();
        assert_eq!((s.mean, s.sd), (0.7, 0.0));
        assert_eq!(summarize(&[0.4, 0.4, 0.4]).unwrap().sd, 0.0);
        assert_eq!(summarize::<f64>(&[]), Err(StatError::Empty));
    }

    #[test]
    fn relative_improvement_published_values() {
        let up = relative_improvement(0.8760, 0.8286);
        assert_eq!(format!("{up:.2}"), "5.72");
        let down = relative_improvement(0.7864, 1.3263);
        assert_eq!(format!("{down:.1}"), "-40.7");
        assert_eq!(relative_improvement(0.5, 0.5), 0.0);
    }

    fn trace_from(values: &[f64]) -> Trace {
        let mut t = Trace::new("random", 0);
        for &v in values {
            t.push(crate::Configuration::new(), Ok(v), 0.0, 0.0);
        }
        t
    }

    #[test]
    fn iqr_bands() {
        let same = vec![trace_from(&[1.0, 2.0]), trace_from(&[1.0, 2.0])];
        for b in iqr_trace(&same).into_iter().flatten() {
            assert_eq!(b.q25, b.median);
            assert_eq!(b.median, b.q75);
        }
        let two = vec![trace_from(&[1.0]), trace_from(&[3.0])];
        assert_eq!(iqr_trace(&two)[0].unwrap().median, 2.0);
        let four: Vec<Trace> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| trace_from(&[v])).collect();
        let b = iqr_trace(&four)[0].unwrap();
        assert_eq!((b.q25, b.median, b.q75), (1.75, 2.5, 3.25));
    }

    #[test]
    fn runset_groups_in_insertion_order() {
        let mut rs = RunSet::new("bench");
        let mut t = trace_from(&[0.3]);
        t.strategy = "bayes".into();
        rs.add(t);
        rs.add(trace_from(&[0.1]));
        rs.add(trace_from(&[0.2]));
        let names: Vec<&str> = rs.groups.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(names, ["bayes", "random"]);
        assert_eq!(rs.final_bests("random"), vec![0.1, 0.2]);
    }
}

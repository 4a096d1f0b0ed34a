//! Observed-entry alternating least squares for low-rank rating
//! factorization, with seeded splits and the validation-RMSE objective.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use hypertune_core::linalg::{cholesky_jittered, cholesky_solve, Matrix};
use hypertune_core::{seeded_rng, Configuration, ParamDef, ParamSpace, ParamValue, Scalar};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AlsError {
    #[error("cold start row {0}")]
    ColdStartRow(usize),
    #[error("cold start col {0}")]
    ColdStartCol(usize),
    #[error("entry ({i},{j}) outside {m}x{n} matrix")]
    OutOfBounds { i: usize, j: usize, m: usize, n: usize },
    #[error("duplicate entry ({0},{1})")]
    Duplicate(usize, usize),
    #[error("empty entry set")]
    Empty,
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions((f64, f64, f64)),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("normal equations could not be solved: {0}")]
    Solve(#[from] hypertune_core::linalg::LinalgError),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Space(#[from] hypertune_core::space::SpaceError),
}

/// Sparse `m × n` ratings as `(row, col, value)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix<T> {
    m: usize,
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> RatingsMatrix<T> {
    pub fn new(m: usize, n: usize, entries: Vec<(usize, usize, T)>) -> Result<Self, AlsError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(i, j, _) in &entries {
            if i >= m || j >= n {
                return Err(AlsError::OutOfBounds { i, j, m, n });
            }
            if !seen.insert((i, j)) {
                return Err(AlsError::Duplicate(i, j));
            }
        }
        Ok(Self { m, n, entries })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn with_entries(&self, entries: Vec<(usize, usize, T)>) -> Self {
        Self {
            m: self.m,
            n: self.n,
            entries,
        }
    }

    /// CSV `i,j,rating` with header, 0-based indices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), AlsError> {
        writeln!(w, "i,j,rating")?;
        for (i, j, v) in &self.entries {
            writeln!(w, "{i},{j},{v}")?;
        }
        Ok(())
    }

    /// Dimensions are inferred as one past the largest index seen.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, AlsError> {
        let mut entries = Vec::new();
        let (mut m, mut n) = (0, 0);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| AlsError::Format {
                line: idx + 1,
                msg: msg.into(),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad("expected i,j,rating"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("bad row index"))?;
            let j: usize = f[1].parse().map_err(|_| bad("bad column index"))?;
            let v: f64 = f[2].parse().map_err(|_| bad("bad rating"))?;
            m = m.max(i + 1);
            n = n.max(j + 1);
            entries.push((i, j, T::lit(v)));
        }
        Self::new(m, n, entries)
    }
}

/// Factors `X` (`m × k`, row `i` is `x_i`) and `Y` stored column-wise as an
/// `n × k` matrix whose row `j` is `y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<T> {
    pub x: Matrix<T>,
    pub y: Matrix<T>,
}

impl<T: Scalar> FactorModel<T> {
    pub fn zeros(m: usize, n: usize, k: usize) -> Self {
        Self {
            x: Matrix::zeros(m, k),
            y: Matrix::zeros(n, k),
        }
    }

    pub fn rank(&self) -> usize {
        self.x.cols()
    }

    pub fn predict(&self, i: usize, j: usize) -> T {
        self.x.row(i).iter().zip(self.y.row(j)).map(|(&a, &b)| a * b).sum()
    }
}

pub fn predict<T: Scalar>(model: &FactorModel<T>, i: usize, j: usize) -> T {
    model.predict(i, j)
}

/// `Σ_Ω (A_ij − x_i·y_j)² + λ Σ‖x_i‖² + λ Σ‖y_j‖²`.
pub fn als_objective_value<T: Scalar>(model: &FactorModel<T>, train: &RatingsMatrix<T>, lambda: T) -> T {
    let fit: T = train
        .entries()
        .iter()
        .map(|&(i, j, a)| {
            let r = a - model.predict(i, j);
            r * r
        })
        .sum();
    let sq = |m: &Matrix<T>| m.as_slice().iter().map(|&v| v * v).sum::<T>();
    fit + lambda * (sq(&model.x) + sq(&model.y))
}

pub fn rmse<T: Scalar>(model: &FactorModel<T>, entries: &[(usize, usize, T)]) -> Result<T, AlsError> {
    if entries.is_empty() {
        return Err(AlsError::Empty);
    }
    let sse: T = entries
        .iter()
        .map(|&(i, j, a)| {
            let r = a - model.predict(i, j);
            r * r
        })
        .sum();
    Ok((sse / T::from_usize_lossy(entries.len())).sqrt())
}

/// Fit settings; `log_lambda` is base 10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub log_lambda: f64,
    pub k: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    /// Untuned baseline.
    fn default() -> Self {
        Self {
            log_lambda: -3.0,
            k: 10,
            iterations: 10,
            seed: 0,
        }
    }
}

impl AlsConfig {
    pub fn lambda(&self) -> f64 {
        10f64.powf(self.log_lambda)
    }

    pub fn space() -> ParamSpace {
        ParamSpace::new(vec![
            ParamDef::continuous("log_lambda", -4.0, 1.0).unwrap(),
            ParamDef::integer("k", 1, 32).unwrap(),
            ParamDef::integer("T", 1, 30).unwrap(),
        ])
        .expect("static als space")
    }

    pub fn from_config(c: &Configuration, seed: u64) -> Result<Self, AlsError> {
        let pos = |name: &str| -> Result<usize, AlsError> {
            usize::try_from(c.int(name)?)
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| AlsError::InvalidConfig(format!("{name} must be >= 1")))
        };
        Ok(Self {
            log_lambda: c.real("log_lambda")?,
            k: pos("k")?,
            iterations: pos("T")?,
            seed,
        })
    }

    pub fn to_config(&self) -> Configuration {
        Configuration::new()
            .with("log_lambda", ParamValue::Real(self.log_lambda))
            .with("k", ParamValue::Int(self.k as i64))
            .with("T", ParamValue::Int(self.iterations as i64))
    }
}

/// Per-row and per-column adjacency of the training entries.
#[derive(Debug, Clone)]
pub struct AlsIndex<T> {
    by_row: Vec<Vec<(usize, T)>>,
    by_col: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> AlsIndex<T> {
    /// Fails if any row or column has no entries.
    pub fn new(train: &RatingsMatrix<T>) -> Result<Self, AlsError> {
        let mut by_row = vec![Vec::new(); train.rows()];
        let mut by_col = vec![Vec::new(); train.cols()];
        for &(i, j, a) in train.entries() {
            by_row[i].push((j, a));
            by_col[j].push((i, a));
        }
        if let Some(i) = by_row.iter().position(Vec::is_empty) {
            return Err(AlsError::ColdStartRow(i));
        }
        if let Some(j) = by_col.iter().position(Vec::is_empty) {
            return Err(AlsError::ColdStartCol(j));
        }
        Ok(Self { by_row, by_col })
    }
}

/// Jitter schedule for singular Gram matrices (only reachable with λ = 0).
const SOLVE_JITTER: f64 = 1e-12;
const SOLVE_JITTER_MAX: f64 = 1e-6;

/// `argmin_x Σ (x·f_j − a_j)² + λ‖x‖²` via `(F Fᵀ + λI) x = F a`.
pub fn solve_factor<T: Scalar>(obs: &[(usize, T)], other: &Matrix<T>, lambda: T) -> Result<Vec<T>, AlsError> {
    let k = other.cols();
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = vec![T::zero(); k];
    for &(idx, a) in obs {
        let f = other.row(idx);
        for p in 0..k {
            rhs[p] += a * f[p];
            for q in 0..=p {
                gram[(p, q)] += f[p] * f[q];
            }
        }
    }
    for p in 0..k {
        gram[(p, p)] += lambda;
        for q in 0..p {
            gram[(q, p)] = gram[(p, q)];
        }
    }
    let (l, _) = cholesky_jittered(&gram, T::lit(SOLVE_JITTER), T::lit(SOLVE_JITTER_MAX))?;
    Ok(cholesky_solve(&l, &rhs))
}

fn solve_all<T: Scalar>(adj: &[Vec<(usize, T)>], other: &Matrix<T>, lambda: T, parallel: bool) -> Result<Matrix<T>, AlsError> {
    let rows: Vec<Vec<T>> = if parallel {
        adj.par_iter().map(|obs| solve_factor(obs, other, lambda)).collect::<Result<_, _>>()?
    } else {
        adj.iter().map(|obs| solve_factor(obs, other, lambda)).collect::<Result<_, _>>()?
    };
    Ok(Matrix::from_rows(&rows))
}

/// Re-solves every `x_i` with `Y` fixed.
pub fn row_half_step<T: Scalar>(model: &mut FactorModel<T>, index: &AlsIndex<T>, lambda: T, parallel: bool) -> Result<(), AlsError> {
    model.x = solve_all(&index.by_row, &model.y, lambda, parallel)?;
    Ok(())
}

/// Re-solves every `y_j` with `X` fixed.
pub fn col_half_step<T: Scalar>(model: &mut FactorModel<T>, index: &AlsIndex<T>, lambda: T, parallel: bool) -> Result<(), AlsError> {
    model.y = solve_all(&index.by_col, &model.x, lambda, parallel)?;
    Ok(())
}

/// Factors i.i.d. uniform in `±0.5/√k`.
pub fn als_init<T: Scalar>(m: usize, n: usize, k: usize, seed: u64) -> FactorModel<T> {
    let mut rng = seeded_rng(seed);
    let scale = 1.0 / (k as f64).sqrt();
    let mut draw = |_, _| T::lit(rng.random_range(-0.5..0.5) * scale);
    let x = Matrix::from_fn(m, k, &mut draw);
    let y = Matrix::from_fn(n, k, &mut draw);
    FactorModel { x, y }
}

pub fn als_fit<T: Scalar>(train: &RatingsMatrix<T>, cfg: &AlsConfig) -> Result<FactorModel<T>, AlsError> {
    als_fit_traced(train, cfg, false).map(|(m, _)| m)
}

/// Runs `T` row/column sweeps. Also returns the training objective at
/// initialization and after every half-step.
pub fn als_fit_traced<T: Scalar>(
    train: &RatingsMatrix<T>,
    cfg: &AlsConfig,
    parallel: bool,
) -> Result<(FactorModel<T>, Vec<T>), AlsError> {
    if cfg.k == 0 {
        return Err(AlsError::InvalidConfig("k must be >= 1".into()));
    }
    let lambda = T::lit(cfg.lambda());
    if lambda < T::zero() || !lambda.is_finite() {
        return Err(AlsError::InvalidConfig("lambda must be finite and >= 0".into()));
    }
    als_fit_lambda(train, lambda, cfg.k, cfg.iterations, cfg.seed, parallel)
}

/// As [`als_fit_traced`] but with `λ` given directly (allows `λ = 0`).
pub fn als_fit_lambda<T: Scalar>(
    train: &RatingsMatrix<T>,
    lambda: T,
    k: usize,
    iterations: usize,
    seed: u64,
    parallel: bool,
) -> Result<(FactorModel<T>, Vec<T>), AlsError> {
    let index = AlsIndex::new(train)?;
    let mut model = als_init(train.rows(), train.cols(), k, seed);
    let mut history = vec![als_objective_value(&model, train, lambda)];
    for _ in 0..iterations {
        row_half_step(&mut model, &index, lambda, parallel)?;
        history.push(als_objective_value(&model, train, lambda));
        col_half_step(&mut model, &index, lambda, parallel)?;
        history.push(als_objective_value(&model, train, lambda));
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsSplit<T> {
    pub train: RatingsMatrix<T>,
    pub valid: RatingsMatrix<T>,
    pub test: RatingsMatrix<T>,
    /// Entries moved into train so every row/column seen in the data has a
    /// training entry.
    pub reassigned: usize,
}

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

pub fn split_ratings<T: Scalar>(
    ratings: &RatingsMatrix<T>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<RatingsSplit<T>, AlsError> {
    let (a, b, c) = fractions;
    if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(AlsError::BadFractions(fractions));
    }
    let mut entries = ratings.entries().to_vec();
    entries.shuffle(&mut seeded_rng(seed));
    let total = entries.len();
    let n_train = ((a * total as f64).round() as usize).min(total);
    let n_valid = ((b * total as f64).round() as usize).min(total - n_train);
    let mut rest = entries.split_off(n_train);
    let mut train = entries;
    let mut test = rest.split_off(n_valid);
    let mut valid = rest;

    let mut row_seen = vec![false; ratings.rows()];
    let mut col_seen = vec![false; ratings.cols()];
    for &(i, j, _) in &train {
        row_seen[i] = true;
        col_seen[j] = true;
    }
    let mut reassigned = 0;
    for part in [&mut valid, &mut test] {
        let mut kept = Vec::with_capacity(part.len());
        for e in part.drain(..) {
            if !row_seen[e.0] || !col_seen[e.1] {
                row_seen[e.0] = true;
                col_seen[e.1] = true;
                train.push(e);
                reassigned += 1;
            } else {
                kept.push(e);
            }
        }
        *part = kept;
    }
    Ok(RatingsSplit {
        train: ratings.with_entries(train),
        valid: ratings.with_entries(valid),
        test: ratings.with_entries(test),
        reassigned,
    })
}

/// `A = U Vᵀ + N(0, noise_sd²)` on a random `density` fraction of cells,
/// with `U, V ~ N(0,1)/√true_rank`. Every row and column gets at least
/// one cell.
pub fn make_synthetic_ratings(seed: u64, m: usize, n: usize, true_rank: usize, noise_sd: f64, density: f64) -> RatingsMatrix<f64> {
    let mut rng = seeded_rng(seed);
    let r = true_rank.max(1);
    let s = 1.0 / (r as f64).sqrt();
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let u = Matrix::from_fn(m, r, |_, _| gauss(&mut rng) * s);
    let v = Matrix::from_fn(n, r, |_, _| gauss(&mut rng) * s);

    let target = ((density.clamp(0.0, 1.0) * (m * n) as f64).round() as usize).min(m * n);
    let mut chosen = vec![false; m * n];
    let mut cells = Vec::with_capacity(target);
    let mut take = |i: usize, j: usize, cells: &mut Vec<(usize, usize)>| {
        if !chosen[i * n + j] {
            chosen[i * n + j] = true;
            cells.push((i, j));
        }
    };
    if n > 0 {
        for i in 0..m {
            let j = rng.random_range(0..n);
            take(i, j, &mut cells);
        }
    }
    if m > 0 {
        let mut col_seen = vec![false; n];
        for &(_, j) in &cells {
            col_seen[j] = true;
        }
        for (j, seen) in col_seen.iter().enumerate() {
            if !seen {
                let i = rng.random_range(0..m);
                take(i, j, &mut cells);
            }
        }
    }
    let mut all: Vec<usize> = (0..m * n).collect();
    all.shuffle(&mut rng);
    for c in all {
        if cells.len() >= target {
            break;
        }
        take(c / n, c % n, &mut cells);
    }
    cells.sort_unstable();
    let noise = noise_sd.max(0.0);
    let entries = cells
        .into_iter()
        .map(|(i, j)| {
            let clean: f64 = u.row(i).iter().zip(v.row(j)).map(|(a, b)| a * b).sum();
            (i, j, clean + noise * gauss(&mut rng))
        })
        .collect();
    RatingsMatrix::new(m, n, entries).expect("generated cells are unique and in range")
}

/// Negative validation RMSE after fitting on the training split.
pub fn recsys_objective<T: Scalar>(ratings: &RatingsMatrix<T>, cfg: &AlsConfig, seed: u64) -> Result<f64, AlsError> {
    let split = split_ratings(ratings, DEFAULT_FRACTIONS, seed)?;
    let cfg = AlsConfig { seed, ..*cfg };
    let model = als_fit(&split.train, &cfg)?;
    Ok(-rmse(&model, split.valid.entries())?.to_f64_lossy())
}

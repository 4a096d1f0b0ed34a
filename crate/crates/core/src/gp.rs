//! Gaussian-process regression over unit-cube inputs (Matérn 5/2 ARD
//! kernel) and the expected-improvement acquisition.

use rand::Rng;
use thiserror::Error;

use crate::linalg::{cholesky_jittered, dot, solve_lower, solve_lower_transpose, LinalgError, Matrix};
use crate::scalar::{norm_cdf, norm_pdf, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("need at least {need} observations, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("non-finite target at index {0}")]
    NonFiniteTarget(usize),
    #[error("input {index} has dimension {got}, expected {expected}")]
    InputDimension { index: usize, expected: usize, got: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub const JITTER_FLOOR: f64 = 1e-10;
pub const JITTER_CEILING: f64 = 1e-4;

/// Search box for fitted hyperparameters (natural units).
const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e1);
const SIGNAL_BOUNDS: (f64, f64) = (1e-2, 1e2);
const NOISE_BOUNDS: (f64, f64) = (JITTER_FLOOR, 1.0);

/// Ranges the restart points are drawn from, log-uniformly.
const START_LENGTHSCALE: (f64, f64) = (0.05, 2.0);
const START_SIGNAL: (f64, f64) = (0.25, 4.0);
const START_NOISE: (f64, f64) = (1e-8, 1e-2);

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams<T> {
    pub lengthscales: Vec<T>,
    pub signal_var: T,
    pub noise_var: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(lengthscales: Vec<T>, signal_var: T, noise_var: T) -> Result<Self, GpError> {
        if lengthscales.iter().any(|l| !l.is_finite() || *l <= T::zero()) {
            return Err(GpError::InvalidKernel("lengthscales must be positive and finite"));
        }
        if !signal_var.is_finite() || signal_var <= T::zero() {
            return Err(GpError::InvalidKernel("signal variance must be positive"));
        }
        if !noise_var.is_finite() || noise_var < T::zero() {
            return Err(GpError::InvalidKernel("noise variance must be non-negative"));
        }
        Ok(Self {
            lengthscales,
            signal_var,
            noise_var,
        })
    }

    /// Isotropic parameters with the same lengthscale on every axis.
    pub fn isotropic(dim: usize, lengthscale: T, signal_var: T, noise_var: T) -> Result<Self, GpError> {
        Self::new(vec![lengthscale; dim], signal_var, noise_var)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Matérn 5/2 covariance between two points (noise not included).
    pub fn covariance(&self, a: &[T], b: &[T]) -> T {
        let mut r2 = T::zero();
        for ((&x, &y), &l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        let sqrt5r = (T::lit(5.0) * r2).sqrt();
        self.signal_var * (T::one() + sqrt5r + T::lit(5.0 / 3.0) * r2) * (-sqrt5r).exp()
    }

    fn to_log(&self) -> Vec<T> {
        let mut v: Vec<T> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.max(T::lit(JITTER_FLOOR)).ln());
        v
    }

    fn from_log(v: &[T]) -> Self {
        let d = v.len() - 2;
        let clamp = |x: T, (lo, hi): (f64, f64)| x.exp().max(T::lit(lo)).min(T::lit(hi));
        Self {
            lengthscales: v[..d].iter().map(|&x| clamp(x, LENGTHSCALE_BOUNDS)).collect(),
            signal_var: clamp(v[d], SIGNAL_BOUNDS),
            noise_var: clamp(v[d + 1], NOISE_BOUNDS),
        }
    }
}

fn gram<T: Scalar>(inputs: &[Vec<T>], kernel: &KernelParams<T>) -> Matrix<T> {
    let n = inputs.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let c = kernel.covariance(&inputs[i], &inputs[j]);
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
        k[(i, i)] = kernel.signal_var + kernel.noise_var;
    }
    k
}

struct Factored<T> {
    chol: Matrix<T>,
    alpha: Vec<T>,
    log_marginal: T,
}

fn factor<T: Scalar>(inputs: &[Vec<T>], y: &[T], kernel: &KernelParams<T>) -> Result<Factored<T>, GpError> {
    let k = gram(inputs, kernel);
    let (chol, _jitter) = cholesky_jittered(&k, T::lit(JITTER_FLOOR), T::lit(JITTER_CEILING))?;
    let alpha = solve_lower_transpose(&chol, &solve_lower(&chol, y));
    let n = y.len();
    let log_det: T = (0..n).map(|i| chol[(i, i)].ln()).sum::<T>() * T::lit(2.0);
    let log_marginal = -T::lit(0.5) * dot(y, &alpha)
        - T::lit(0.5) * log_det
        - T::lit(0.5) * T::from_usize_lossy(n) * (T::lit(2.0) * T::PI()).ln();
    Ok(Factored {
        chol,
        alpha,
        log_marginal,
    })
}

/// GP evidence `log p(y | X, θ)` for already-standardized targets.
pub fn log_marginal<T: Scalar>(inputs: &[Vec<T>], targets_std: &[T], kernel: &KernelParams<T>) -> Result<T, GpError> {
    check_inputs(inputs, targets_std, kernel.dim(), 1)?;
    Ok(factor(inputs, targets_std, kernel)?.log_marginal)
}

fn check_inputs<T: Scalar>(inputs: &[Vec<T>], targets: &[T], dim: usize, need: usize) -> Result<(), GpError> {
    if inputs.len() < need || targets.len() != inputs.len() {
        return Err(GpError::TooFewPoints {
            need,
            got: inputs.len().min(targets.len()),
        });
    }
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != dim {
            return Err(GpError::InputDimension {
                index: i,
                expected: dim,
                got: x.len(),
            });
        }
    }
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(GpError::NonFiniteTarget(i));
    }
    Ok(())
}

/// Fitted GP posterior. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    inputs: Vec<Vec<T>>,
    targets_std: Vec<T>,
    target_mean: T,
    target_sd: T,
    kernel: KernelParams<T>,
    chol: Matrix<T>,
    alpha: Vec<T>,
    log_marginal: T,
}

/// Outcome of one restart of the hyperparameter search.
#[derive(Debug, Clone)]
pub struct RestartRecord<T> {
    pub start: KernelParams<T>,
    pub start_log_marginal: Option<T>,
    pub end_log_marginal: Option<T>,
}

impl<T: Scalar> GpModel<T> {
    /// Conditions a GP with fixed kernel parameters on `(inputs, targets)`.
    pub fn with_kernel(inputs: Vec<Vec<T>>, targets: &[T], kernel: KernelParams<T>) -> Result<Self, GpError> {
        check_inputs(&inputs, targets, kernel.dim(), 1)?;
        let (mean, sd, ystd) = standardize(targets);
        let f = factor(&inputs, &ystd, &kernel)?;
        Ok(Self {
            inputs,
            targets_std: ystd,
            target_mean: mean,
            target_sd: sd,
            kernel,
            chol: f.chol,
            alpha: f.alpha,
            log_marginal: f.log_marginal,
        })
    }

    /// Fits kernel hyperparameters by maximizing the evidence.
    pub fn fit<R: Rng + ?Sized>(inputs: Vec<Vec<T>>, targets: &[T], restarts: usize, rng: &mut R) -> Result<Self, GpError> {
        Self::fit_with_report(inputs, targets, restarts, rng).map(|(m, _)| m)
    }

    /// As [`GpModel::fit`], also returning the per-restart search record.
    ///
    /// Restart 0 starts from the default point (ℓ = 0.5, σf² = 1,
    /// σn² = 1e-4); the others from log-uniform draws. Each restart runs a
    /// coordinate search on the log-parameters and the best end point wins,
    /// ties going to the lowest restart index.
    pub fn fit_with_report<R: Rng + ?Sized>(
        inputs: Vec<Vec<T>>,
        targets: &[T],
        restarts: usize,
        rng: &mut R,
    ) -> Result<(Self, Vec<RestartRecord<T>>), GpError> {
        let dim = inputs.first().map_or(0, Vec::len);
        check_inputs(&inputs, targets, dim, 2)?;
        let (mean, sd, ystd) = standardize(targets);
        if ystd.iter().all(|&v| v == T::zero()) {
            // Constant targets: nothing to learn, use a noise-dominated kernel.
            let kernel = KernelParams::isotropic(dim, T::one(), T::lit(1e-4), T::lit(1e-2))?;
            let f = factor(&inputs, &ystd, &kernel)?;
            let model = Self {
                inputs,
                targets_std: ystd,
                target_mean: mean,
                target_sd: sd,
                kernel,
                chol: f.chol,
                alpha: f.alpha,
                log_marginal: f.log_marginal,
            };
            return Ok((model, Vec::new()));
        }

        let evidence = |log_params: &[T]| -> Option<T> {
            let k = KernelParams::from_log(log_params);
            factor(&inputs, &ystd, &k).ok().map(|f| f.log_marginal).filter(|v| v.is_finite())
        };

        let mut records = Vec::with_capacity(restarts.max(1));
        let mut best: Option<(T, Vec<T>)> = None;
        for r in 0..restarts.max(1) {
            let start = if r == 0 {
                KernelParams::isotropic(dim, T::lit(0.5), T::one(), T::lit(1e-4))?
            } else {
                let draw = |rng: &mut R, (lo, hi): (f64, f64)| T::lit(rng.random_range(lo.ln()..=hi.ln()).exp());
                KernelParams {
                    lengthscales: (0..dim).map(|_| draw(rng, START_LENGTHSCALE)).collect(),
                    signal_var: draw(rng, START_SIGNAL),
                    noise_var: draw(rng, START_NOISE),
                }
            };
            let x0 = start.to_log();
            let start_val = evidence(&x0);
            let (x_end, end_val) = coordinate_search(&evidence, x0, start_val);
            if let Some(v) = end_val {
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, x_end));
                }
            }
            records.push(RestartRecord {
                start,
                start_log_marginal: start_val,
                end_log_marginal: end_val,
            });
        }
        let (_, x_best) = best.ok_or(GpError::Linalg(LinalgError::IllConditioned {
            max_jitter: JITTER_CEILING,
        }))?;
        let kernel = KernelParams::from_log(&x_best);
        let f = factor(&inputs, &ystd, &kernel)?;
        let model = Self {
            inputs,
            targets_std: ystd,
            target_mean: mean,
            target_sd: sd,
            kernel,
            chol: f.chol,
            alpha: f.alpha,
            log_marginal: f.log_marginal,
        };
        Ok((model, records))
    }

    pub fn kernel(&self) -> &KernelParams<T> {
        &self.kernel
    }

    pub fn log_marginal(&self) -> T {
        self.log_marginal
    }

    pub fn target_mean(&self) -> T {
        self.target_mean
    }

    pub fn target_sd(&self) -> T {
        self.target_sd
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn targets_std(&self) -> &[T] {
        &self.targets_std
    }

    /// Posterior mean and latent variance in standardized units.
    pub fn predict_std(&self, x: &[T]) -> (T, T) {
        let kstar: Vec<T> = self.inputs.iter().map(|xi| self.kernel.covariance(xi, x)).collect();
        let mean = dot(&kstar, &self.alpha);
        let v = solve_lower(&self.chol, &kstar);
        let var = (self.kernel.signal_var - dot(&v, &v)).max(T::zero());
        (mean, var)
    }

    /// Posterior mean and variance in the original target units.
    pub fn predict(&self, x: &[T]) -> (T, T) {
        let (m, v) = self.predict_std(x);
        (
            m * self.target_sd + self.target_mean,
            v * self.target_sd * self.target_sd,
        )
    }

    /// Expected improvement over `best_value` (original units).
    pub fn expected_improvement(&self, x: &[T], best_value: T, xi: T, maximize: bool) -> T {
        let (mean, var) = self.predict(x);
        expected_improvement(mean, var.sqrt(), best_value, xi, maximize)
    }
}

fn standardize<T: Scalar>(y: &[T]) -> (T, T, Vec<T>) {
    let n = T::from_usize_lossy(y.len());
    let mean = y.iter().copied().sum::<T>() / n;
    let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let sd = var.sqrt();
    if sd < T::lit(1e-12) {
        return (mean, T::lit(1e-12), vec![T::zero(); y.len()]);
    }
    (mean, sd, y.iter().map(|&v| (v - mean) / sd).collect())
}

/// Derivative-free coordinate search maximizing `f`; steps halve when a full
/// sweep finds no improvement.
fn coordinate_search<T: Scalar>(f: &impl Fn(&[T]) -> Option<T>, mut x: Vec<T>, mut fx: Option<T>) -> (Vec<T>, Option<T>) {
    let mut step = T::one();
    let min_step = T::lit(1e-2);
    let max_evals = 40 * x.len() + 40;
    let mut evals = 0;
    while step >= min_step && evals < max_evals {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [T::one(), -T::one()] {
                let mut trial = x.clone();
                trial[i] += dir * step;
                evals += 1;
                let ft = f(&trial);
                let better = match (ft, fx) {
                    (Some(a), Some(b)) => a > b,
                    (Some(_), None) => true,
                    _ => false,
                };
                if better {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= T::lit(2.0);
        }
    }
    (x, fx)
}

/// Closed-form EI for a Gaussian with the given mean and standard deviation.
///
/// The improvement is `mean - best - xi` when maximizing and
/// `best - mean - xi` when minimizing.
pub fn expected_improvement<T: Scalar>(mean: T, sd: T, best_value: T, xi: T, maximize: bool) -> T {
    let delta = if maximize { mean - best_value } else { best_value - mean } - xi;
    if !(sd > T::lit(1e-300)) {
        return delta.max(T::zero());
    }
    let z = delta / sd;
    (delta * norm_cdf(z) + sd * norm_pdf(z)).max(T::zero())
}

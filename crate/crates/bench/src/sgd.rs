//! RMSProp with the momentum-on-the-step accumulator, 2-D test objectives,
//! and a one-hidden-layer tanh MLP trained for a single epoch on two-moons
//! data as a tunable benchmark.

use std::io::{BufRead, Write};

use hypertune_core::linalg::Matrix;
use hypertune_core::{seeded_rng, Configuration, ParamDef, ParamSpace, ParamValue, Scalar};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SgdError {
    #[error("divergent gradient")]
    DivergentGradient,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Space(#[from] hypertune_core::space::SpaceError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub eps: T,
}

impl<T: Scalar> RmsPropConfig<T> {
    pub fn new(alpha: T, beta: T, gamma: T) -> Result<Self, SgdError> {
        let cfg = Self {
            alpha,
            beta,
            gamma,
            eps: T::lit(1e-8),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_eps(mut self, eps: T) -> Result<Self, SgdError> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), SgdError> {
        let unit = |v: T| v >= T::zero() && v < T::one();
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(SgdError::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !unit(self.beta) || !unit(self.gamma) {
            return Err(SgdError::InvalidConfig("beta and gamma must lie in [0,1)".into()));
        }
        if !(self.eps > T::zero()) {
            return Err(SgdError::InvalidConfig("eps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T> {
    pub theta: Vec<T>,
    pub m: Vec<T>,
    pub b: Vec<T>,
    pub t: usize,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(theta0: Vec<T>) -> Self {
        let n = theta0.len();
        Self {
            theta: theta0,
            m: vec![T::zero(); n],
            b: vec![T::zero(); n],
            t: 0,
        }
    }
}

/// One update, elementwise:
/// `m ← γm + (1−γ)g²`, `b ← βb + αg/√(m+ε)`, `θ ← θ − b`.
pub fn rmsprop_step<T: Scalar>(state: &mut RmsPropState<T>, grad: &[T], cfg: &RmsPropConfig<T>) -> Result<(), SgdError> {
    if grad.len() != state.theta.len() {
        return Err(SgdError::DimensionMismatch {
            expected: state.theta.len(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(SgdError::DivergentGradient);
    }
    for i in 0..grad.len() {
        let g = grad[i];
        state.m[i] = cfg.gamma * state.m[i] + (T::one() - cfg.gamma) * g * g;
        state.b[i] = cfg.beta * state.b[i] + cfg.alpha * g / (state.m[i] + cfg.eps).sqrt();
        state.theta[i] -= state.b[i];
    }
    state.t += 1;
    Ok(())
}

/// Trajectory `[θ0, θ1, …, θ_steps]`.
pub fn rmsprop_run<T: Scalar>(
    mut grad: impl FnMut(&[T]) -> Vec<T>,
    theta0: &[T],
    cfg: &RmsPropConfig<T>,
    steps: usize,
) -> Result<Vec<Vec<T>>, SgdError> {
    let mut state = RmsPropState::new(theta0.to_vec());
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(state.theta.clone());
    for _ in 0..steps {
        let g = grad(&state.theta);
        rmsprop_step(&mut state, &g, cfg)?;
        traj.push(state.theta.clone());
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestObjective<T> {
    /// `½‖θ − c‖²`
    Bowl { center: Vec<T> },
    /// `(1−x)² + 100(y−x²)²`
    Rosenbrock,
}

impl<T: Scalar> TestObjective<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Bowl { .. } => "bowl",
            Self::Rosenbrock => "rosenbrock",
        }
    }

    pub fn value(&self, theta: &[T]) -> T {
        match self {
            Self::Bowl { center } => {
                T::lit(0.5)
                    * theta
                        .iter()
                        .zip(center)
                        .map(|(&t, &c)| (t - c) * (t - c))
                        .sum::<T>()
            }
            Self::Rosenbrock => {
                let (x, y) = (theta[0], theta[1]);
                let a = T::one() - x;
                let b = y - x * x;
                a * a + T::lit(100.0) * b * b
            }
        }
    }

    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        match self {
            Self::Bowl { center } => theta.iter().zip(center).map(|(&t, &c)| t - c).collect(),
            Self::Rosenbrock => {
                let (x, y) = (theta[0], theta[1]);
                let b = y - x * x;
                vec![
                    -T::lit(2.0) * (T::one() - x) - T::lit(400.0) * x * b,
                    T::lit(200.0) * b,
                ]
            }
        }
    }
}

/// The 2-D bowl centred at the origin and the Rosenbrock function.
pub fn test_objectives<T: Scalar>() -> Vec<TestObjective<T>> {
    vec![
        TestObjective::Bowl {
            center: vec![T::zero(); 2],
        },
        TestObjective::Rosenbrock,
    ]
}

/// One hidden tanh layer and a linear output margin.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, inputs),
            b1: vec![T::zero(); hidden],
            w2: vec![T::zero(); hidden],
            b2: T::zero(),
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn random<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let s1 = 1.0 / (inputs as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        let w1 = Matrix::from_fn(hidden, inputs, |_, _| T::lit(rng.random_range(-s1..=s1)));
        let w2 = (0..hidden).map(|_| T::lit(rng.random_range(-s2..=s2))).collect();
        Self {
            w1,
            b1: vec![T::zero(); hidden],
            w2,
            b2: T::zero(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_params(&self) -> usize {
        self.hidden() * (self.inputs() + 2) + 1
    }

    /// Flattened in the order W1 (row-major), b1, W2, b2.
    pub fn params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(self.w1.as_slice());
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[T]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let (h, d) = (self.hidden(), self.inputs());
        self.w1 = Matrix::from_vec(h, d, p[..h * d].to_vec());
        self.b1 = p[h * d..h * d + h].to_vec();
        self.w2 = p[h * d + h..h * d + 2 * h].to_vec();
        self.b2 = p[h * d + 2 * h];
    }

    fn hidden_activations(&self, x: &[T]) -> Vec<T> {
        (0..self.hidden())
            .map(|j| (self.w1.row(j).iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + self.b1[j]).tanh())
            .collect()
    }

    pub fn forward(&self, x: &[T]) -> T {
        let a = self.hidden_activations(x);
        a.iter().zip(&self.w2).map(|(&a, &w)| a * w).sum::<T>() + self.b2
    }

    /// Mean logistic loss `log(1+e^{−y·margin})` over the batch and its
    /// gradient in `params()` order.
    pub fn loss_grad(&self, xs: &[&[T]], ys: &[i8]) -> (T, Vec<T>) {
        let (h, d) = (self.hidden(), self.inputs());
        let mut grad = vec![T::zero(); self.n_params()];
        let mut loss = T::zero();
        for (x, &label) in xs.iter().zip(ys) {
            let y = if label > 0 { T::one() } else { -T::one() };
            let a = self.hidden_activations(x);
            let margin = a.iter().zip(&self.w2).map(|(&a, &w)| a * w).sum::<T>() + self.b2;
            let z = -y * margin;
            loss += if z > T::zero() {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            // dL/dmargin = −y σ(−y·margin)
            let sig = T::one() / (T::one() + (-z).exp());
            let dm = -y * sig;
            for j in 0..h {
                let dz = dm * self.w2[j] * (T::one() - a[j] * a[j]);
                for k in 0..d {
                    grad[j * d + k] += dz * x[k];
                }
                grad[h * d + j] += dz;
                grad[h * d + h + j] += dm * a[j];
            }
            grad[h * d + 2 * h] += dm;
        }
        let n = T::from_usize_lossy(xs.len().max(1));
        for g in &mut grad {
            *g /= n;
        }
        (loss / n, grad)
    }

    pub fn accuracy(&self, xs: &[Vec<T>], ys: &[i8]) -> f64 {
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| (self.forward(x) >= T::zero()) == (y > 0))
            .count();
        hits as f64 / ys.len().max(1) as f64
    }
}

/// Labelled 2-D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// CSV with header `label,x,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SgdError> {
        writeln!(w, "label,x,y")?;
        for (p, l) in self.points.iter().zip(&self.labels) {
            writeln!(w, "{l},{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, SgdError> {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| SgdError::Format {
                line: i + 1,
                msg: msg.into(),
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad("expected label,x,y"));
            }
            let l: i8 = f[0].parse().map_err(|_| bad("bad label"))?;
            if l != 1 && l != -1 {
                return Err(bad("label must be -1 or 1"));
            }
            let x: f64 = f[1].parse().map_err(|_| bad("bad x"))?;
            let y: f64 = f[2].parse().map_err(|_| bad("bad y"))?;
            points.push(vec![x, y]);
            labels.push(l);
        }
        Ok(Self { points, labels })
    }
}

/// Two interleaving half circles with isotropic Gaussian noise; labels alternate.
pub fn make_two_moons(seed: u64, n: usize, noise: f64) -> PointSet {
    let mut rng = seeded_rng(seed);
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("valid sd");
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (x, y, l) = if i % 2 == 0 {
            (t.cos(), t.sin(), 1)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), -1)
        };
        points.push(vec![x + jitter.sample(&mut rng), y + jitter.sample(&mut rng)]);
        labels.push(l);
    }
    PointSet { points, labels }
}

/// Tunable RMSProp/MLP configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdBenchConfig {
    pub log_alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub hidden: usize,
}

impl Default for SgdBenchConfig {
    /// Untuned baseline: α = 1e-3, no momentum, γ = 0.9.
    fn default() -> Self {
        Self {
            log_alpha: -3.0,
            beta: 0.0,
            gamma: 0.9,
            batch_size: 32,
            hidden: 4,
        }
    }
}

impl SgdBenchConfig {
    pub fn space() -> ParamSpace {
        ParamSpace::new(vec![
            ParamDef::continuous("log_alpha", -4.0, 0.0).unwrap(),
            ParamDef::continuous("beta", 0.0, 0.99).unwrap(),
            ParamDef::continuous("gamma", 0.0, 0.999).unwrap(),
            ParamDef::integer("batch_size", 8, 64).unwrap(),
            ParamDef::integer("hidden", 2, 16).unwrap(),
        ])
        .expect("static sgd space")
    }

    pub fn alpha(&self) -> f64 {
        10f64.powf(self.log_alpha)
    }

    pub fn rmsprop(&self) -> Result<RmsPropConfig<f64>, SgdError> {
        RmsPropConfig::new(self.alpha(), self.beta, self.gamma)
    }

    pub fn from_config(c: &Configuration) -> Result<Self, SgdError> {
        let pos = |name: &str| -> Result<usize, SgdError> {
            usize::try_from(c.int(name)?)
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| SgdError::InvalidConfig(format!("{name} must be >= 1")))
        };
        Ok(Self {
            log_alpha: c.real("log_alpha")?,
            beta: c.real("beta")?,
            gamma: c.real("gamma")?,
            batch_size: pos("batch_size")?,
            hidden: pos("hidden")?,
        })
    }

    pub fn to_config(&self) -> Configuration {
        Configuration::new()
            .with("log_alpha", ParamValue::Real(self.log_alpha))
            .with("beta", ParamValue::Real(self.beta))
            .with("gamma", ParamValue::Real(self.gamma))
            .with("batch_size", ParamValue::Int(self.batch_size as i64))
            .with("hidden", ParamValue::Int(self.hidden as i64))
    }
}

/// Seeded 80/20 split and MLP initialization shared by the objective and
/// its no-learning baseline.
fn prepare(data: &PointSet, hidden: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Mlp<f64>, rand_chacha::ChaCha8Rng) {
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_train = (data.len() * 4).div_ceil(5);
    let valid = order.split_off(n_train);
    let mlp = Mlp::random(2, hidden, &mut rng);
    (order, valid, mlp, rng)
}

fn subset_accuracy(mlp: &Mlp<f64>, data: &PointSet, idx: &[usize]) -> f64 {
    let xs: Vec<Vec<f64>> = idx.iter().map(|&i| data.points[i].clone()).collect();
    let ys: Vec<i8> = idx.iter().map(|&i| data.labels[i]).collect();
    mlp.accuracy(&xs, &ys)
}

/// Validation accuracy of the freshly initialized network (no training).
pub fn init_accuracy(data: &PointSet, hidden: usize, seed: u64) -> f64 {
    let (_, valid, mlp, _) = prepare(data, hidden, seed);
    subset_accuracy(&mlp, data, &valid)
}

/// One epoch of mini-batch RMSProp on 80% of the data, accuracy on the rest.
pub fn sgd_objective(data: &PointSet, cfg: &SgdBenchConfig, seed: u64) -> Result<f64, SgdError> {
    if data.len() < 5 {
        return Err(SgdError::InvalidConfig("need at least 5 points".into()));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(SgdError::InvalidConfig("batch_size and hidden must be >= 1".into()));
    }
    let rms = cfg.rmsprop()?;
    let (mut train, valid, mut mlp, mut rng) = prepare(data, cfg.hidden, seed);
    train.shuffle(&mut rng);
    let mut state = RmsPropState::new(mlp.params());
    for batch in train.chunks(cfg.batch_size) {
        let xs: Vec<&[f64]> = batch.iter().map(|&i| data.points[i].as_slice()).collect();
        let ys: Vec<i8> = batch.iter().map(|&i| data.labels[i]).collect();
        let (_, g) = mlp.loss_grad(&xs, &ys);
        rmsprop_step(&mut state, &g, &rms)?;
        if state.theta.iter().any(|v| !v.is_finite()) {
            return Err(SgdError::DivergentGradient);
        }
        mlp.set_params(&state.theta);
    }
    Ok(subset_accuracy(&mlp, data, &valid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, beta: f64, gamma: f64) -> RmsPropConfig<f64> {
        RmsPropConfig::new(alpha, beta, gamma).unwrap()
    }

    #[test]
    fn zero_gradient_fixpoint() {
        let mut s = RmsPropState {
            theta: vec![1.0, -2.0],
            m: vec![0.5, 2.0],
            b: vec![0.0, 0.0],
            t: 3,
        };
        rmsprop_step(&mut s, &[0.0, 0.0], &cfg(0.1, 0.5, 0.9)).unwrap();
        assert_eq!(s.theta, vec![1.0, -2.0]);
        assert!((s.m[0] - 0.45).abs() < 1e-15 && (s.m[1] - 1.8).abs() < 1e-15);
        assert_eq!(s.t, 4);
    }

    #[test]
    fn first_step_by_hand() {
        let c = cfg(0.1, 0.0, 0.0);
        let mut s = RmsPropState::new(vec![1.0]);
        rmsprop_step(&mut s, &[2.0], &c).unwrap();
        assert_eq!(s.m, vec![4.0]);
        let b = 0.1 * 2.0 / (4.0f64 + 1e-8).sqrt();
        assert_eq!(s.b, vec![b]);
        assert!((s.theta[0] - (1.0 - b)).abs() < 1e-15);
        assert!((s.theta[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn momentum_two_steps_by_hand() {
        let c = cfg(0.2, 0.5, 0.0);
        let mut s = RmsPropState::new(vec![0.0]);
        rmsprop_step(&mut s, &[3.0], &c).unwrap();
        let b1 = s.b[0];
        rmsprop_step(&mut s, &[3.0], &c).unwrap();
        let fresh = 0.2 * 3.0 / (9.0f64 + 1e-8).sqrt();
        assert!((s.b[0] - (0.5 * b1 + fresh)).abs() < 1e-15);
        assert!((s.theta[0] + b1 + s.b[0]).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_faults() {
        let mut s = RmsPropState::new(vec![0.0, 0.0]);
        let e = rmsprop_step(&mut s, &[1.0, f64::NAN], &cfg(0.1, 0.0, 0.9)).unwrap_err();
        assert_eq!(e.to_string(), "divergent gradient");
        assert!(rmsprop_step(&mut s, &[1.0], &cfg(0.1, 0.0, 0.9)).is_err());
    }

    #[test]
    fn bowl_converges() {
        let bowl = TestObjective::Bowl { center: vec![0.0, 0.0] };
        let traj = rmsprop_run(|t| bowl.gradient(t), &[1.0, 1.0], &cfg(0.1, 0.0, 0.9), 100).unwrap();
        assert_eq!(traj.len(), 101);
        let last = traj.last().unwrap();
        assert!((last[0].powi(2) + last[1].powi(2)).sqrt() < 0.1);
    }

    #[test]
    fn zero_steps() {
        let traj = rmsprop_run(|t: &[f64]| t.to_vec(), &[0.3, 0.4], &cfg(0.1, 0.0, 0.9), 0).unwrap();
        assert_eq!(traj, vec![vec![0.3, 0.4]]);
    }

    #[test]
    fn sign_descent_limit() {
        let c = cfg(0.05, 0.0, 0.0).with_eps(1e-300).unwrap();
        let mut s = RmsPropState::new(vec![0.0, 0.0, 0.0]);
        rmsprop_step(&mut s, &[3.0, -0.01, 0.0], &c).unwrap();
        assert!((s.theta[0] + 0.05).abs() < 0.05 * 1e-6);
        assert!((s.theta[1] - 0.05).abs() < 0.05 * 1e-6);
        assert_eq!(s.theta[2], 0.0);
    }

    #[test]
    fn objective_minima() {
        let objs = test_objectives::<f64>();
        assert_eq!(objs[0].gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(objs[1].value(&[1.0, 1.0]), 0.0);
        assert_eq!(objs[1].gradient(&[1.0, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_mlp_margin_and_loss() {
        let m = Mlp::<f64>::zeros(2, 3);
        assert_eq!(m.forward(&[0.4, -1.0]), 0.0);
        let x = [0.4, -1.0];
        let (loss, _) = m.loss_grad(&[&x], &[1]);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn params_roundtrip() {
        let mut rng = seeded_rng(3);
        let m = Mlp::<f64>::random(2, 5, &mut rng);
        let mut z = Mlp::zeros(2, 5);
        z.set_params(&m.params());
        assert_eq!(z, m);
        assert_eq!(m.n_params(), 5 * 2 + 5 + 5 + 1);
    }

    #[test]
    fn duplicated_batch_same_mean() {
        let mut rng = seeded_rng(4);
        let m = Mlp::<f64>::random(2, 4, &mut rng);
        let (a, b) = ([0.2, 0.9], [-1.0, 0.3]);
        let (l1, g1) = m.loss_grad(&[&a, &b], &[1, -1]);
        let (l2, g2) = m.loss_grad(&[&a, &b, &a, &b], &[1, -1, 1, -1]);
        assert!((l1 - l2).abs() < 1e-14);
        assert!(g1.iter().zip(&g2).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn moons_csv_roundtrip() {
        let d = make_two_moons(1, 20, 0.1);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(PointSet::read_csv(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn config_roundtrip() {
        let c = SgdBenchConfig::default();
        assert!(SgdBenchConfig::space().is_valid(&c.to_config()));
        assert_eq!(SgdBenchConfig::from_config(&c.to_config()).unwrap(), c);
    }
}

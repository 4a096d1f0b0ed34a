use hypertune_core::Scalar;
use serde::{Deserialize, Serialize};

use super::tree::RegressionTree;
use super::FeatureError;

/// Supervised (boosting) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupConfig {
    /// Boosting iterations.
    pub m: usize,
    /// Shrinkage.
    pub gamma: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for SupConfig {
    fn default() -> Self {
        Self {
            m: 100,
            gamma: 0.1,
            max_depth: 3,
            min_leaf: 5,
        }
    }
}

pub const LINE_SEARCH_STEPS: usize = 20;
pub const LINE_SEARCH_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble<T> {
    f0: T,
    gamma: T,
    stages: Vec<(T, RegressionTree<T>)>,
}

fn logistic_loss<T: Scalar>(y: T, f: T) -> T {
    // log(1 + e^{-z}) without overflow
    let z = -y * f;
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn label<T: Scalar>(l: i8) -> T {
    if l > 0 {
        T::one()
    } else {
        -T::one()
    }
}

pub fn total_loss<T: Scalar>(labels: &[i8], margins: &[T]) -> T {
    labels.iter().zip(margins).map(|(&l, &f)| logistic_loss(label(l), f)).sum()
}

/// Golden-section minimization of `f` on `[lo, hi]`.
pub fn golden_section<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, steps: usize) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..steps {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / T::lit(2.0)
}

pub fn boost_fit<T: Scalar>(features: &[Vec<T>], labels: &[i8], cfg: &SupConfig) -> Result<BoostedEnsemble<T>, FeatureError> {
    boost_fit_traced(features, labels, cfg).map(|(e, _)| e)
}

/// Gradient boosting with logistic loss. Also returns the training loss
/// after each stage (index 0 is the loss of `F0` alone).
pub fn boost_fit_traced<T: Scalar>(
    features: &[Vec<T>],
    labels: &[i8],
    cfg: &SupConfig,
) -> Result<(BoostedEnsemble<T>, Vec<T>), FeatureError> {
    if features.len() != labels.len() {
        return Err(FeatureError::InvalidConfig("features/labels length mismatch".into()));
    }
    if labels.len() < 2 {
        return Err(FeatureError::TooFewSamples {
            need: 2,
            got: labels.len(),
        });
    }
    if !(cfg.gamma > 0.0) || cfg.gamma > 1.0 {
        return Err(FeatureError::InvalidConfig(format!("gamma {} outside (0,1]", cfg.gamma)));
    }
    let pos = labels.iter().filter(|&&l| l > 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(FeatureError::SingleClass);
    }
    let f0 = T::lit(0.5) * (T::from_usize_lossy(pos) / T::from_usize_lossy(neg)).ln();
    let gamma = T::lit(cfg.gamma);
    let ys: Vec<T> = labels.iter().map(|&l| label(l)).collect();
    let mut margins = vec![f0; labels.len()];
    let mut history = vec![total_loss(labels, &margins)];
    let mut stages = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let residuals: Vec<T> = ys.iter().zip(&margins).map(|(&y, &f)| y / (T::one() + (y * f).exp())).collect();
        let tree = RegressionTree::fit(features, &residuals, cfg.max_depth, cfg.min_leaf);
        let g: Vec<T> = features.iter().map(|x| tree.predict(x)).collect();
        let loss_at = |rho: T| -> T {
            ys.iter()
                .zip(&margins)
                .zip(&g)
                .map(|((&y, &f), &gi)| logistic_loss(y, f + rho * gi))
                .sum()
        };
        let current = *history.last().expect("non-empty");
        let mut rho = golden_section(loss_at, T::zero(), T::lit(LINE_SEARCH_MAX), LINE_SEARCH_STEPS);
        if !(loss_at(rho) < current) {
            rho = T::zero();
        }
        for (f, &gi) in margins.iter_mut().zip(&g) {
            *f += gamma * rho * gi;
        }
        history.push(total_loss(labels, &margins));
        stages.push((rho, tree));
    }
    Ok((BoostedEnsemble { f0, gamma, stages }, history))
}

impl<T: Scalar> BoostedEnsemble<T> {
    pub fn f0(&self) -> T {
        self.f0
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn stages(&self) -> &[(T, RegressionTree<T>)] {
        &self.stages
    }

    pub fn push_stage(&mut self, rho: T, tree: RegressionTree<T>) {
        self.stages.push((rho, tree));
    }

    /// Margin `F0 + Σ γ ρ_m g_m(x)`; its sign is the predicted class.
    pub fn predict(&self, x: &[T]) -> T {
        self.stages
            .iter()
            .fold(self.f0, |f, (rho, tree)| f + self.gamma * *rho * tree.predict(x))
    }

    pub fn classify(&self, x: &[T]) -> i8 {
        if self.predict(x) >= T::zero() {
            1
        } else {
            -1
        }
    }

    pub fn accuracy(&self, features: &[Vec<T>], labels: &[i8]) -> f64 {
        let hits = features.iter().zip(labels).filter(|(x, &l)| self.classify(x) == l).count();
        hits as f64 / labels.len().max(1) as f64
    }
}

pub fn ensemble_predict<T: Scalar>(ensemble: &BoostedEnsemble<T>, features: &[Vec<T>]) -> Vec<T> {
    features.iter().map(|x| ensemble.predict(x)).collect()
}

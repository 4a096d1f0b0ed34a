use hypertune_core::space::{Configuration, ParamDef, ParamSpace, ParamValue};
use hypertune_core::{seeded_rng, Scalar};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::{boost_fit, SupConfig};
use super::encode::featurize_image;
use super::images::{extract_patches, ImageSet};
use super::kmeans::{kmeans_fit, DEFAULT_ITERS};
use super::zca::fit_zca;
use super::FeatureError;

/// Unsupervised (feature learning) hyperparameters. Pooling is fixed at 2×2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnsupConfig {
    pub w: usize,
    pub s: usize,
    pub k: usize,
    pub log_eps_zca: f64,
    pub sparse_p: f64,
}

impl Default for UnsupConfig {
    fn default() -> Self {
        Self {
            w: 4,
            s: 2,
            k: 16,
            log_eps_zca: -2.0,
            sparse_p: 75.0,
        }
    }
}

impl UnsupConfig {
    /// Stride clamped to the patch width.
    pub fn effective_stride(&self) -> usize {
        self.s.min(self.w).max(1)
    }

    pub fn eps_zca(&self) -> f64 {
        10f64.powf(self.log_eps_zca)
    }

    pub fn validate(&self, n: usize) -> Result<(), FeatureError> {
        if self.w < 1 || self.w > n {
            return Err(FeatureError::PatchTooWide { w: self.w, n });
        }
        if self.k < 2 {
            return Err(FeatureError::InvalidConfig("K must be >= 2".into()));
        }
        if !(50.0..=100.0).contains(&self.sparse_p) {
            return Err(FeatureError::InvalidConfig(format!("sparse_p {} outside [50,100]", self.sparse_p)));
        }
        Ok(())
    }
}

/// Joint configuration `(λ_u, λ_s)` searched by the strategies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeaturesConfig {
    pub unsup: UnsupConfig,
    pub sup: SupConfig,
}

impl FeaturesConfig {
    pub fn space() -> ParamSpace {
        ParamSpace::new(vec![
            ParamDef::integer("w", 2, 6).unwrap(),
            ParamDef::integer("s", 1, 4).unwrap(),
            ParamDef::integer("K", 2, 32).unwrap(),
            ParamDef::continuous("log_eps_zca", -4.0, 0.0).unwrap(),
            ParamDef::continuous("sparse_p", 50.0, 100.0).unwrap(),
            ParamDef::integer("M", 10, 200).unwrap(),
            ParamDef::continuous("gamma", 0.01, 0.5).unwrap(),
            ParamDef::integer("max_depth", 1, 6).unwrap(),
            ParamDef::integer("min_leaf", 1, 20).unwrap(),
        ])
        .expect("static features space")
    }

    pub fn from_config(c: &Configuration) -> Result<Self, FeatureError> {
        let nonneg = |name: &str| -> Result<usize, FeatureError> {
            let v = c.int(name)?;
            usize::try_from(v).map_err(|_| FeatureError::InvalidConfig(format!("{name} must be >= 0")))
        };
        Ok(Self {
            unsup: UnsupConfig {
                w: nonneg("w")?,
                s: nonneg("s")?,
                k: nonneg("K")?,
                log_eps_zca: c.real("log_eps_zca")?,
                sparse_p: c.real("sparse_p")?,
            },
            sup: SupConfig {
                m: nonneg("M")?,
                gamma: c.real("gamma")?,
                max_depth: nonneg("max_depth")?,
                min_leaf: nonneg("min_leaf")?,
            },
        })
    }

    pub fn to_config(&self) -> Configuration {
        let int = |v: usize| ParamValue::Int(v as i64);
        Configuration::new()
            .with("w", int(self.unsup.w))
            .with("s", int(self.unsup.s))
            .with("K", int(self.unsup.k))
            .with("log_eps_zca", ParamValue::Real(self.unsup.log_eps_zca))
            .with("sparse_p", ParamValue::Real(self.unsup.sparse_p))
            .with("M", int(self.sup.m))
            .with("gamma", ParamValue::Real(self.sup.gamma))
            .with("max_depth", int(self.sup.max_depth))
            .with("min_leaf", int(self.sup.min_leaf))
    }
}

/// Upper bound on patches fed to ZCA and k-means; larger pools are subsampled.
pub const MAX_POOL_PATCHES: usize = 6000;

/// Held-out accuracy of the full pipeline. Half of the images (seeded
/// shuffle) form the unlabeled pool used only for ZCA and k-means; the rest
/// are featurized and split 80/20 for boosting and evaluation.
pub fn pipeline_objective<T: Scalar>(
    images: &ImageSet<T>,
    unsup: &UnsupConfig,
    sup: &SupConfig,
    seed: u64,
) -> Result<f64, FeatureError> {
    unsup.validate(images.side())?;
    if images.len() < 8 {
        return Err(FeatureError::TooFewSamples {
            need: 8,
            got: images.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut rng);
    let (pool, labeled) = order.split_at(images.len() / 2);

    let stride = unsup.effective_stride();
    let mut patches = Vec::new();
    for &i in pool {
        patches.extend(extract_patches(&images.images()[i], unsup.w, stride)?.patches);
    }
    if patches.len() > MAX_POOL_PATCHES {
        patches.shuffle(&mut rng);
        patches.truncate(MAX_POOL_PATCHES);
    }
    let zca = fit_zca(&patches, T::lit(unsup.eps_zca()))?;
    let whitened = zca.apply(&patches);
    let codebook = kmeans_fit(&whitened, unsup.k, DEFAULT_ITERS, seed)?;

    let feats: Vec<Vec<T>> = labeled
        .par_iter()
        .map(|&i| featurize_image(&images.images()[i], unsup, &zca, &codebook))
        .collect::<Result<_, _>>()?;
    let labels: Vec<i8> = labeled.iter().map(|&i| images.labels()[i]).collect();

    let n_train = (labeled.len() * 4).div_ceil(5);
    let ens = boost_fit(&feats[..n_train], &labels[..n_train], sup)?;
    Ok(ens.accuracy(&feats[n_train..], &labels[n_train..]))
}

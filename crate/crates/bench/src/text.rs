//! Bag-of-n-grams text classification: vocabulary construction with
//! document-frequency filtering, elastic-net logistic regression trained by
//! SGD, and the Monte Carlo cross-validation accuracy objective.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use hypertune_core::{seeded_rng, Configuration, ParamDef, ParamSpace, ParamValue};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("vocabulary empty")]
    VocabularyEmpty,
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Space(#[from] hypertune_core::space::SpaceError),
}

/// Labelled documents; labels are -1 or +1.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<Vec<String>>,
    labels: Vec<i8>,
}

impl Corpus {
    pub fn new(docs: Vec<Vec<String>>, labels: Vec<i8>) -> Result<Self, TextError> {
        if docs.len() != labels.len() {
            return Err(TextError::InvalidCorpus(format!(
                "{} documents but {} labels",
                docs.len(),
                labels.len()
            )));
        }
        if let Some(i) = docs.iter().position(Vec::is_empty) {
            return Err(TextError::InvalidCorpus(format!("document {i} is empty")));
        }
        if let Some(l) = labels.iter().find(|l| **l != 1 && **l != -1) {
            return Err(TextError::InvalidCorpus(format!("label {l} is not -1 or 1")));
        }
        Ok(Self { docs, labels })
    }

    pub fn docs(&self) -> &[Vec<String>] {
        &self.docs
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Reads `<label>\t<text>` lines; text is lowercased and split on whitespace.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (label, text) = line.split_once('\t').ok_or_else(|| TextError::Format {
                line: i + 1,
                msg: "expected <label>\\t<text>".into(),
            })?;
            let label: i8 = match label.trim() {
                "1" | "+1" => 1,
                "-1" => -1,
                other => {
                    return Err(TextError::Format {
                        line: i + 1,
                        msg: format!("label `{other}` is not -1 or 1"),
                    })
                }
            };
            docs.push(text.split_whitespace().map(str::to_lowercase).collect());
            labels.push(label);
        }
        Self::new(docs, labels)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), TextError> {
        for (doc, label) in self.docs.iter().zip(&self.labels) {
            writeln!(w, "{}\t{}", label, doc.join(" "))?;
        }
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> (Vec<&[String]>, Vec<f64>) {
        (
            idx.iter().map(|&i| self.docs[i].as_slice()).collect(),
            idx.iter().map(|&i| f64::from(self.labels[i])).collect(),
        )
    }
}

/// Contiguous n-grams of `tokens`, joined with `_`.
pub fn extract_ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Vec<String> {
    assert!(n >= 1, "n-gram length must be >= 1");
    if tokens.len() < n {
        return Vec::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("_"))
        .collect()
}

/// N-gram vocabulary; column indices follow lexicographic n-gram order.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramVocab {
    entries: BTreeMap<String, usize>,
    n_min: usize,
    n_max: usize,
    min_df_frac: f64,
    max_df_frac: f64,
}

impl NgramVocab {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self, ngram: &str) -> Option<usize> {
        self.entries.get(ngram).copied()
    }

    pub fn ngrams(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn n_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    pub fn df_range(&self) -> (f64, f64) {
        (self.min_df_frac, self.max_df_frac)
    }
}

/// Keeps the n-grams (n in `n_min..=n_max`) whose document-frequency
/// fraction lies in `[min_df_frac, max_df_frac]`.
pub fn build_vocab<S: AsRef<str>, D: AsRef<[S]>>(
    docs: &[D],
    n_min: usize,
    n_max: usize,
    min_df_frac: f64,
    max_df_frac: f64,
) -> Result<NgramVocab, TextError> {
    if n_min < 1 || n_min > n_max {
        return Err(TextError::InvalidSettings(format!("n-gram range {n_min}..={n_max}")));
    }
    if !(min_df_frac > 0.0 && min_df_frac <= max_df_frac && max_df_frac <= 1.0) {
        return Err(TextError::InvalidSettings(format!(
            "document-frequency range [{min_df_frac}, {max_df_frac}]"
        )));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let mut seen = BTreeSet::new();
        for n in n_min..=n_max {
            seen.extend(extract_ngrams(doc.as_ref(), n));
        }
        for g in seen {
            *df.entry(g).or_default() += 1;
        }
    }
    let total = docs.len() as f64;
    let entries: BTreeMap<String, usize> = df
        .into_iter()
        .filter(|(_, c)| {
            let frac = *c as f64 / total;
            frac >= min_df_frac && frac <= max_df_frac
        })
        .enumerate()
        .map(|(i, (g, _))| (g, i))
        .collect();
    if entries.is_empty() {
        return Err(TextError::VocabularyEmpty);
    }
    Ok(NgramVocab {
        entries,
        n_min,
        n_max,
        min_df_frac,
        max_df_frac,
    })
}

/// Sparse bag-of-words counts, sorted by column index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BowVector {
    entries: Vec<(usize, u32)>,
}

impl BowVector {
    /// From (index, count) pairs; indices must be strictly increasing and counts positive.
    pub fn from_pairs(entries: Vec<(usize, u32)>) -> Self {
        assert!(entries.windows(2).all(|w| w[0].0 < w[1].0), "indices strictly increasing");
        assert!(entries.iter().all(|e| e.1 >= 1), "counts >= 1");
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, c)| w[i] * f64::from(c)).sum()
    }
}

pub fn vectorize<S: AsRef<str>>(vocab: &NgramVocab, tokens: &[S]) -> BowVector {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for n in vocab.n_min..=vocab.n_max {
        for g in extract_ngrams(tokens, n) {
            if let Some(i) = vocab.index(&g) {
                *counts.entry(i).or_default() += 1;
            }
        }
    }
    BowVector {
        entries: counts.into_iter().collect(),
    }
}

/// One training example: features and a label in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: BowVector,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LrParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            intercept: 0.0,
        }
    }

    pub fn margin(&self, x: &BowVector) -> f64 {
        x.dot(&self.weights) + self.intercept
    }

    pub fn l1(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn l2_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// log(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss plus the elastic-net penalty; the intercept is not penalized.
pub fn lr_objective_value(params: &LrParams, data: &[Example], alpha: f64, rho: f64) -> f64 {
    let data_term = if data.is_empty() {
        0.0
    } else {
        data.iter().map(|e| softplus(-e.y * params.margin(&e.x))).sum::<f64>() / data.len() as f64
    };
    data_term + alpha * ((1.0 - rho) / 2.0 * params.l2_sq() + rho * params.l1())
}

/// Gradient of the smooth part (mean logistic loss + L2 term) with respect
/// to the weights and the intercept.
pub fn lr_smooth_gradient(params: &LrParams, data: &[Example], alpha: f64, rho: f64) -> LrParams {
    let mut g = LrParams::zeros(params.weights.len());
    let m = data.len().max(1) as f64;
    for e in data {
        let coef = -e.y * sigmoid(-e.y * params.margin(&e.x)) / m;
        for &(j, c) in e.x.entries() {
            g.weights[j] += coef * f64::from(c);
        }
        g.intercept += coef;
    }
    for (gj, wj) in g.weights.iter_mut().zip(&params.weights) {
        *gj += alpha * (1.0 - rho) * wj;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdSettings {
    pub epochs: usize,
    pub eta0: f64,
}

impl Default for SgdSettings {
    fn default() -> Self {
        Self { epochs: 5, eta0: 0.1 }
    }
}

/// Per-example SGD with step size `eta0 / (1 + t/M)`.
///
/// After each data-gradient step the L2 part shrinks the weights by
/// `max(0, 1 - η·α·(1-ρ))` and the L1 part moves each weight toward zero by
/// `η·α·ρ`, stopping at zero.
pub fn train_sgd(data: &[Example], dim: usize, alpha: f64, rho: f64, settings: SgdSettings, seed: u64) -> LrParams {
    train_sgd_monitored(data, dim, alpha, rho, settings, seed, |_, _| {})
}

/// [`train_sgd`] with a callback after every epoch.
pub fn train_sgd_monitored(
    data: &[Example],
    dim: usize,
    alpha: f64,
    rho: f64,
    settings: SgdSettings,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &LrParams),
) -> LrParams {
    let mut params = LrParams::zeros(dim);
    let mut rng = seeded_rng(seed);
    let m = data.len().max(1) as f64;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0usize;
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = settings.eta0 / (1.0 + t as f64 / m);
            t += 1;
            let e = &data[i];
            let coef = -e.y * sigmoid(-e.y * params.margin(&e.x));
            for &(j, c) in e.x.entries() {
                params.weights[j] -= eta * coef * f64::from(c);
            }
            params.intercept -= eta * coef;
            let shrink = (1.0 - eta * alpha * (1.0 - rho)).max(0.0);
            let l1_step = eta * alpha * rho;
            if shrink != 1.0 || l1_step != 0.0 {
                for w in params.weights.iter_mut() {
                    let v = *w * shrink;
                    *w = v.signum() * (v.abs() - l1_step).max(0.0);
                }
            }
        }
        on_epoch(epoch, &params);
    }
    params
}

/// Fraction of examples whose predicted sign (ties → +1) matches the label.
pub fn accuracy(params: &LrParams, data: &[Example]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|e| {
            let pred = if params.margin(&e.x) >= 0.0 { 1.0 } else { -1.0 };
            pred == e.y
        })
        .count();
    correct as f64 / data.len() as f64
}

/// The text benchmark's tunable configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextConfig {
    pub min_n_gram: usize,
    pub ngram_offset: usize,
    pub log_min_df: f64,
    pub df_offset: f64,
    pub log_alpha: f64,
    pub rho: f64,
}

impl TextConfig {
    pub fn n_max(&self) -> usize {
        self.min_n_gram + self.ngram_offset
    }

    pub fn min_df_frac(&self) -> f64 {
        10f64.powf(self.log_min_df)
    }

    pub fn max_df_frac(&self) -> f64 {
        (self.min_df_frac() + self.df_offset).min(1.0)
    }

    pub fn alpha(&self) -> f64 {
        10f64.powf(self.log_alpha)
    }

    pub fn space() -> ParamSpace {
        ParamSpace::new(vec![
            ParamDef::integer("min_n_gram", 1, 2).unwrap(),
            ParamDef::integer("ngram_offset", 0, 2).unwrap(),
            ParamDef::continuous("log_min_df", -4.0, -1.0).unwrap(),
            ParamDef::continuous("df_offset", 0.05, 0.9).unwrap(),
            ParamDef::continuous("log_alpha", -6.0, -1.0).unwrap(),
            ParamDef::continuous("rho", 0.0, 1.0).unwrap(),
        ])
        .expect("static text space")
    }

    /// Untuned baseline: unigrams, every n-gram kept up to 90% df, α = 1e-4, pure L2.
    pub fn untuned() -> Self {
        Self {
            min_n_gram: 1,
            ngram_offset: 0,
            log_min_df: -4.0,
            df_offset: 0.9,
            log_alpha: -4.0,
            rho: 0.0,
        }
    }

    pub fn from_config(c: &Configuration) -> Result<Self, TextError> {
        Ok(Self {
            min_n_gram: c.int("min_n_gram")? as usize,
            ngram_offset: c.int("ngram_offset")? as usize,
            log_min_df: c.real("log_min_df")?,
            df_offset: c.real("df_offset")?,
            log_alpha: c.real("log_alpha")?,
            rho: c.real("rho")?,
        })
    }

    pub fn to_config(&self) -> Configuration {
        Configuration::new()
            .with("min_n_gram", ParamValue::Int(self.min_n_gram as i64))
            .with("ngram_offset", ParamValue::Int(self.ngram_offset as i64))
            .with("log_min_df", ParamValue::Real(self.log_min_df))
            .with("df_offset", ParamValue::Real(self.df_offset))
            .with("log_alpha", ParamValue::Real(self.log_alpha))
            .with("rho", ParamValue::Real(self.rho))
    }
}

/// Cross-validation protocol of the text objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvSettings {
    pub folds: usize,
    pub train_frac: f64,
    pub sgd: SgdSettings,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            train_frac: 0.7,
            sgd: SgdSettings::default(),
        }
    }
}

/// Accuracy of a model trained on `train` and scored on `valid`, with the
/// vocabulary built from the training documents only.
pub fn split_accuracy(corpus: &Corpus, train: &[usize], valid: &[usize], cfg: &TextConfig, sgd: SgdSettings, seed: u64) -> Result<f64, TextError> {
    let (train_docs, train_y) = corpus.subset(train);
    let vocab = build_vocab(&train_docs, cfg.min_n_gram, cfg.n_max(), cfg.min_df_frac(), cfg.max_df_frac())?;
    let to_examples = |docs: Vec<&[String]>, ys: Vec<f64>| -> Vec<Example> {
        docs.iter()
            .zip(ys)
            .map(|(d, y)| Example { x: vectorize(&vocab, d), y })
            .collect()
    };
    let train_ex = to_examples(train_docs, train_y);
    let (valid_docs, valid_y) = corpus.subset(valid);
    let valid_ex = to_examples(valid_docs, valid_y);
    let params = train_sgd(&train_ex, vocab.len(), cfg.alpha(), cfg.rho, sgd, seed);
    Ok(accuracy(&params, &valid_ex))
}

/// Mean validation accuracy over `folds` independent seeded random
/// train/validation splits.
pub fn cv_objective(corpus: &Corpus, cfg: &TextConfig, settings: CvSettings, seed: u64) -> Result<f64, TextError> {
    if corpus.len() < 10 {
        return Err(TextError::InvalidCorpus(format!("need at least 10 documents, got {}", corpus.len())));
    }
    if settings.folds == 0 || !(settings.train_frac > 0.0 && settings.train_frac < 1.0) {
        return Err(TextError::InvalidSettings("folds >= 1 and train_frac in (0,1)".into()));
    }
    let n = corpus.len();
    let n_train = ((n as f64) * settings.train_frac).round() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let mut total = 0.0;
    for fold in 0..settings.folds {
        let fold_seed = seed.wrapping_mul(1_000_003).wrapping_add(fold as u64);
        let mut rng = seeded_rng(fold_seed);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (train, valid) = idx.split_at(n_train);
        total += split_accuracy(corpus, train, valid, cfg, settings.sgd, fold_seed)?;
    }
    Ok(total / settings.folds as f64)
}

/// Two-class synthetic corpus.
///
/// Each class owns a disjoint block of `vocab_size / 10` signal tokens; a
/// token is drawn from the document's own signal block with probability
/// `0.15 · class_skew`, otherwise from a Zipf-like background distribution
/// shared by both classes. Labels alternate, so classes are balanced.
pub fn make_synthetic_corpus(seed: u64, n_docs: usize, vocab_size: usize, doc_len: usize, class_skew: f64) -> Corpus {
    assert!(vocab_size >= 20, "vocab_size >= 20");
    assert!(doc_len >= 1, "doc_len >= 1");
    let mut rng = seeded_rng(seed);
    let block = vocab_size / 10;
    let token = |i: usize| format!("t{i:04}");
    let weights: Vec<f64> = (0..vocab_size).map(|r| 1.0 / (r as f64 + 2.0)).collect();
    let total: f64 = weights.iter().sum();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    // background ranks are shuffled so signal tokens are not the most frequent
    let mut rank_to_token: Vec<usize> = (0..vocab_size).collect();
    rank_to_token.shuffle(&mut rng);
    let p_signal = 0.15 * class_skew.clamp(0.0, 1.0);
    let mut docs = Vec::with_capacity(n_docs);
    let mut labels = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let label: i8 = if d % 2 == 0 { 1 } else { -1 };
        let offset = if label == 1 { 0 } else { block };
        let doc: Vec<String> = (0..doc_len)
            .map(|_| {
                if rng.random::<f64>() < p_signal {
                    token(offset + rng.random_range(0..block))
                } else {
                    let u: f64 = rng.random();
                    let r = cdf.partition_point(|&c| c < u).min(vocab_size - 1);
                    token(rank_to_token[r])
                }
            })
            .collect();
        docs.push(doc);
        labels.push(label);
    }
    Corpus::new(docs, labels).expect("synthetic corpus is well formed")
}

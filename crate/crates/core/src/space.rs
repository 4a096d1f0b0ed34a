//! Mixed parameter spaces: definitions, validation, sampling, grids, and
//! the embedding into the unit cube used by the surrogate model.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("parameter `{name}`: {reason}")]
    InvalidDef { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("unit vector has dimension {got}, space needs {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("configuration has no value for `{0}`")]
    MissingValue(String),
    #[error("value of `{name}` has the wrong kind (expected {expected})")]
    WrongKind { name: String, expected: &'static str },
}

/// The domain of one tunable parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Continuous { lo: f64, hi: f64, log_scale: bool },
    Integer { lo: i64, hi: i64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    name: String,
    domain: Domain,
}

impl ParamDef {
    pub fn new(name: impl Into<String>, domain: Domain) -> Result<Self, SpaceError> {
        let name = name.into();
        let bad = |reason: &str| SpaceError::InvalidDef {
            name: name.clone(),
            reason: reason.to_string(),
        };
        match &domain {
            Domain::Continuous { lo, hi, log_scale } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(bad("bounds must be finite"));
                }
                if lo >= hi {
                    return Err(bad("continuous domain needs lo < hi"));
                }
                if *log_scale && *lo <= 0.0 {
                    return Err(bad("log scale needs lo > 0"));
                }
            }
            Domain::Integer { lo, hi } => {
                if lo > hi {
                    return Err(bad("integer domain needs lo <= hi"));
                }
            }
            Domain::Categorical { levels } => {
                let mut seen = levels.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != levels.len() {
                    return Err(bad("categorical levels must be distinct"));
                }
                if levels.len() < 2 {
                    return Err(bad("categorical domain needs at least 2 levels"));
                }
            }
        }
        Ok(Self { name, domain })
    }

    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Continuous { lo, hi, log_scale: false })
    }

    pub fn log_continuous(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Continuous { lo, hi, log_scale: true })
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Integer { lo, hi })
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Result<Self, SpaceError> {
        Self::new(
            name,
            Domain::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Number of unit-cube coordinates this parameter occupies.
    pub fn unit_dim(&self) -> usize {
        match &self.domain {
            Domain::Categorical { levels } => levels.len(),
            _ => 1,
        }
    }

    fn check(&self, value: &ParamValue) -> Option<Violation> {
        let name = self.name.clone();
        match (&self.domain, value) {
            (Domain::Continuous { lo, hi, .. }, v) => match v.as_f64() {
                Some(x) if x.is_finite() && x >= *lo && x <= *hi => None,
                Some(_) => Some(Violation::OutOfRange(name)),
                None => Some(Violation::WrongKind(name)),
            },
            (Domain::Integer { lo, hi }, v) => match v.as_f64() {
                Some(x) if x.fract() != 0.0 || !x.is_finite() => Some(Violation::NotIntegral(name)),
                Some(x) if x < *lo as f64 || x > *hi as f64 => Some(Violation::OutOfRange(name)),
                Some(_) => None,
                None => Some(Violation::WrongKind(name)),
            },
            (Domain::Categorical { levels }, ParamValue::Level(s)) => {
                if levels.iter().any(|l| l == s) {
                    None
                } else {
                    Some(Violation::UnknownLevel(name))
                }
            }
            (Domain::Categorical { .. }, _) => Some(Violation::WrongKind(name)),
        }
    }
}

/// A single parameter value.
///
/// Serialized untagged: integers as JSON integers, reals as JSON numbers with
/// a fractional part or exponent, levels as strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Level(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(x) => Some(*x),
            ParamValue::Level(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Level(s) => f.write_str(s),
        }
    }
}

/// A point in a parameter space: one value per parameter name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    values: BTreeMap<String, ParamValue>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: ParamValue) -> Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.values.iter()
    }

    /// Merges `other` into `self`, overwriting shared names.
    pub fn merged(mut self, other: &Configuration) -> Self {
        for (k, v) in other.iter() {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn real(&self, name: &str) -> Result<f64, SpaceError> {
        self.get(name)
            .ok_or_else(|| SpaceError::MissingValue(name.to_string()))?
            .as_f64()
            .ok_or(SpaceError::WrongKind {
                name: name.to_string(),
                expected: "number",
            })
    }

    pub fn int(&self, name: &str) -> Result<i64, SpaceError> {
        let x = self.real(name)?;
        if x.fract() != 0.0 {
            return Err(SpaceError::WrongKind {
                name: name.to_string(),
                expected: "integer",
            });
        }
        Ok(x as i64)
    }

    pub fn level(&self, name: &str) -> Result<&str, SpaceError> {
        match self.get(name) {
            Some(ParamValue::Level(s)) => Ok(s),
            Some(_) => Err(SpaceError::WrongKind {
                name: name.to_string(),
                expected: "level",
            }),
            None => Err(SpaceError::MissingValue(name.to_string())),
        }
    }
}

impl FromIterator<(String, ParamValue)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (String, ParamValue)>>(iter: I) -> Self {
        Self {
            values: iter.into_iter().collect(),
        }
    }
}

/// One domain violation found by [`ParamSpace::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownName(String),
    Missing(String),
    OutOfRange(String),
    NotIntegral(String),
    UnknownLevel(String),
    WrongKind(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownName(n) => write!(f, "{n} is not a parameter of this space"),
            Violation::Missing(n) => write!(f, "{n} has no value"),
            Violation::OutOfRange(n) => write!(f, "{n} out of range"),
            Violation::NotIntegral(n) => write!(f, "{n} is not integral"),
            Violation::UnknownLevel(n) => write!(f, "{n} unknown level"),
            Violation::WrongKind(n) => write!(f, "{n} has a value of the wrong kind"),
        }
    }
}

/// Ordered list of parameter definitions. The order fixes the unit-cube
/// coordinate layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSpace {
    params: Vec<ParamDef>,
}

impl ParamSpace {
    pub fn new(params: Vec<ParamDef>) -> Result<Self, SpaceError> {
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ParamDef> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Space with the named parameters removed (used for fixed overrides).
    pub fn without(&self, names: &[&str]) -> Self {
        Self {
            params: self
                .params
                .iter()
                .filter(|p| !names.contains(&p.name.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn unit_dim(&self) -> usize {
        self.params.iter().map(ParamDef::unit_dim).sum()
    }

    /// Every domain violation in `config`; empty when valid.
    pub fn validate(&self, config: &Configuration) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, _) in config.iter() {
            if self.get(name).is_none() {
                out.push(Violation::UnknownName(name.clone()));
            }
        }
        for p in &self.params {
            match config.get(&p.name) {
                None => out.push(Violation::Missing(p.name.clone())),
                Some(v) => out.extend(p.check(v)),
            }
        }
        out
    }

    pub fn is_valid(&self, config: &Configuration) -> bool {
        self.validate(config).is_empty()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        self.params
            .iter()
            .map(|p| {
                let v = match &p.domain {
                    Domain::Continuous { lo, hi, log_scale: false } => {
                        ParamValue::Real(rng.random_range(*lo..=*hi))
                    }
                    Domain::Continuous { lo, hi, log_scale: true } => {
                        let e = rng.random_range(lo.ln()..=hi.ln());
                        ParamValue::Real(e.exp().clamp(*lo, *hi))
                    }
                    Domain::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
                    Domain::Categorical { levels } => {
                        ParamValue::Level(levels[rng.random_range(0..levels.len())].clone())
                    }
                };
                (p.name.clone(), v)
            })
            .collect()
    }

    /// Shuffled, evenly spaced grid of at most `target_count` points.
    ///
    /// Every continuous dimension gets `g` levels and integer dimensions
    /// get `min(g, span)`, where `g` is the largest count whose Cartesian
    /// product fits `target_count`, but never fewer than 2. When the
    /// 2-level floor overshoots the target, the shuffled product is
    /// truncated.
    pub fn grid<R: Rng + ?Sized>(&self, target_count: usize, rng: &mut R) -> Vec<Configuration> {
        assert!(target_count >= 1, "grid target_count must be >= 1");
        if self.params.is_empty() {
            return vec![Configuration::new()];
        }
        let levels_for = |g: usize| -> Vec<Vec<ParamValue>> {
            self.params.iter().map(|p| grid_levels(&p.domain, g)).collect()
        };
        let count = |g: usize| -> u128 {
            levels_for(g).iter().map(|l| l.len() as u128).product()
        };
        let max_useful = self
            .params
            .iter()
            .map(|p| match &p.domain {
                Domain::Continuous { .. } => usize::MAX,
                Domain::Integer { lo, hi } => (hi - lo + 1) as usize,
                Domain::Categorical { .. } => 1,
            })
            .max()
            .unwrap_or(1);
        let mut g = 1usize;
        while g < max_useful && count(g + 1) <= target_count as u128 {
            g += 1;
        }
        let g = g.max(2);
        let axes = levels_for(g);
        let mut out = vec![Configuration::new()];
        for (p, axis) in self.params.iter().zip(&axes) {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for c in &out {
                for v in axis {
                    next.push(c.clone().with(p.name.clone(), v.clone()));
                }
            }
            out = next;
        }
        out.shuffle(rng);
        out.truncate(target_count);
        out
    }

    /// Embeds a valid configuration into `[0,1]^unit_dim`.
    pub fn to_unit(&self, config: &Configuration) -> Result<Vec<f64>, SpaceError> {
        let mut out = Vec::with_capacity(self.unit_dim());
        for p in &self.params {
            let v = config
                .get(&p.name)
                .ok_or_else(|| SpaceError::MissingValue(p.name.clone()))?;
            match &p.domain {
                Domain::Continuous { lo, hi, log_scale } => {
                    let x = v.as_f64().ok_or(SpaceError::WrongKind {
                        name: p.name.clone(),
                        expected: "number",
                    })?;
                    let u = if *log_scale {
                        (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
                    } else {
                        (x - lo) / (hi - lo)
                    };
                    out.push(u.clamp(0.0, 1.0));
                }
                Domain::Integer { lo, hi } => {
                    let x = config.int(&p.name)?;
                    let span = (hi - lo + 1) as f64;
                    out.push(((x - lo) as f64 + 0.5) / span);
                }
                Domain::Categorical { levels } => {
                    let s = config.level(&p.name)?;
                    out.extend(levels.iter().map(|l| if l == s { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Decodes a unit-cube vector (coordinates clamped to `[0,1]`).
    pub fn from_unit(&self, unit: &[f64]) -> Result<Configuration, SpaceError> {
        let expected = self.unit_dim();
        if unit.len() != expected {
            return Err(SpaceError::Dimension {
                expected,
                got: unit.len(),
            });
        }
        let mut config = Configuration::new();
        let mut at = 0;
        for p in &self.params {
            let value = match &p.domain {
                Domain::Continuous { lo, hi, log_scale } => {
                    let u = clamp_unit(unit[at]);
                    let x = if *log_scale {
                        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                    } else {
                        lo + u * (hi - lo)
                    };
                    ParamValue::Real(x.clamp(*lo, *hi))
                }
                Domain::Integer { lo, hi } => {
                    let span = hi - lo + 1;
                    let u = clamp_unit(unit[at]);
                    let idx = ((u * span as f64).floor() as i64).min(span - 1);
                    ParamValue::Int(lo + idx)
                }
                Domain::Categorical { levels } => {
                    let block = &unit[at..at + levels.len()];
                    let mut best = 0;
                    for (i, &x) in block.iter().enumerate() {
                        if clamp_unit(x) > clamp_unit(block[best]) {
                            best = i;
                        }
                    }
                    ParamValue::Level(levels[best].clone())
                }
            };
            at += p.unit_dim();
            config.insert(p.name.clone(), value);
        }
        Ok(config)
    }
}

fn clamp_unit(u: f64) -> f64 {
    if u.is_nan() {
        0.0
    } else {
        u.clamp(0.0, 1.0)
    }
}

fn grid_levels(domain: &Domain, g: usize) -> Vec<ParamValue> {
    match domain {
        Domain::Continuous { lo, hi, log_scale } => {
            let (a, b) = if *log_scale { (lo.ln(), hi.ln()) } else { (*lo, *hi) };
            let map = |t: f64| if *log_scale { t.exp() } else { t };
            if g == 1 {
                return vec![ParamValue::Real(map(0.5 * (a + b)).clamp(*lo, *hi))];
            }
            (0..g)
                .map(|i| {
                    let x = if i == 0 {
                        *lo
                    } else if i == g - 1 {
                        *hi
                    } else {
                        map(a + (b - a) * i as f64 / (g - 1) as f64).clamp(*lo, *hi)
                    };
                    ParamValue::Real(x)
                })
                .collect()
        }
        Domain::Integer { lo, hi } => {
            let span = (hi - lo + 1) as usize;
            if span <= g {
                return (*lo..=*hi).map(ParamValue::Int).collect();
            }
            if g == 1 {
                return vec![ParamValue::Int(lo + (hi - lo) / 2)];
            }
            let mut v: Vec<i64> = (0..g)
                .map(|i| lo + ((i as f64) * (span - 1) as f64 / (g - 1) as f64).round() as i64)
                .collect();
            v.dedup();
            v.into_iter().map(ParamValue::Int).collect()
        }
        Domain::Categorical { levels } => levels.iter().cloned().map(ParamValue::Level).collect(),
    }
}

// JSON form: {"params":[{"name","type","lo","hi","log","levels"}]}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    params: Vec<RawParam>,
}

#[derive(Serialize, Deserialize)]
struct RawParam {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<ParamValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<ParamValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

impl TryFrom<RawParam> for ParamDef {
    type Error = SpaceError;

    fn try_from(raw: RawParam) -> Result<Self, SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidDef {
            name: raw.name.clone(),
            reason: reason.to_string(),
        };
        let bound = |b: &Option<ParamValue>, which: &str| -> Result<f64, SpaceError> {
            b.as_ref()
                .and_then(ParamValue::as_f64)
                .ok_or_else(|| bad(&format!("missing numeric `{which}`")))
        };
        let domain = match raw.kind.as_str() {
            "continuous" => Domain::Continuous {
                lo: bound(&raw.lo, "lo")?,
                hi: bound(&raw.hi, "hi")?,
                log_scale: raw.log.unwrap_or(false),
            },
            "integer" => {
                let lo = bound(&raw.lo, "lo")?;
                let hi = bound(&raw.hi, "hi")?;
                if lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err(bad("integer bounds must be integral"));
                }
                Domain::Integer {
                    lo: lo as i64,
                    hi: hi as i64,
                }
            }
            "categorical" => Domain::Categorical {
                levels: raw.levels.clone().ok_or_else(|| bad("missing `levels`"))?,
            },
            other => return Err(bad(&format!("unknown type `{other}`"))),
        };
        ParamDef::new(raw.name, domain)
    }
}

impl From<&ParamDef> for RawParam {
    fn from(p: &ParamDef) -> Self {
        let mut raw = RawParam {
            name: p.name.clone(),
            kind: String::new(),
            lo: None,
            hi: None,
            log: None,
            levels: None,
        };
        match &p.domain {
            Domain::Continuous { lo, hi, log_scale } => {
                raw.kind = "continuous".into();
                raw.lo = Some(ParamValue::Real(*lo));
                raw.hi = Some(ParamValue::Real(*hi));
                raw.log = Some(*log_scale);
            }
            Domain::Integer { lo, hi } => {
                raw.kind = "integer".into();
                raw.lo = Some(ParamValue::Int(*lo));
                raw.hi = Some(ParamValue::Int(*hi));
            }
            Domain::Categorical { levels } => {
                raw.kind = "categorical".into();
                raw.levels = Some(levels.clone());
            }
        }
        raw
    }
}

impl Serialize for ParamSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawSpace {
            params: self.params.iter().map(RawParam::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        let params = raw
            .params
            .into_iter()
            .map(ParamDef::try_from)
            .collect::<Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        ParamSpace::new(params).map_err(serde::de::Error::custom)
    }
}

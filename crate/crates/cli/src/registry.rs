use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use hypertune_bench::als::{make_synthetic_ratings, recsys_objective, AlsConfig, RatingsMatrix};
use hypertune_bench::features::{make_synthetic_images, pipeline_objective, FeaturesConfig, ImageSet};
use hypertune_bench::sgd::{make_two_moons, sgd_objective, PointSet, SgdBenchConfig, TestObjective};
use hypertune_bench::text::{cv_objective, make_synthetic_corpus, Corpus, CvSettings, TextConfig};
use hypertune_core::{Configuration, EvalError, ParamDef, ParamSpace, ParamValue};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::config::DatasetSpec;
use crate::error::HarnessError;

pub const BENCHMARK_NAMES: [&str; 6] = ["text", "features", "sgd", "als", "testfn-bowl", "testfn-rosenbrock"];

/// Objective to maximize; errors become failed evaluations.
pub type Objective = Arc<dyn Fn(&Configuration) -> Result<f64, EvalError> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub space: ParamSpace,
    /// Untuned configuration used as the comparison baseline.
    pub untuned: Configuration,
}

/// Center of the bowl test function.
pub const BOWL_CENTER: [f64; 2] = [1.5, -2.0];

fn testfn_space(x: (f64, f64), y: (f64, f64)) -> ParamSpace {
    ParamSpace::new(vec![
        ParamDef::continuous("x", x.0, x.1).unwrap(),
        ParamDef::continuous("y", y.0, y.1).unwrap(),
    ])
    .expect("static test-function space")
}

fn xy(x: f64, y: f64) -> Configuration {
    Configuration::new().with("x", ParamValue::Real(x)).with("y", ParamValue::Real(y))
}

pub fn registry_lookup(name: &str) -> Result<BenchmarkEntry, HarnessError> {
    let entry = match name {
        "text" => BenchmarkEntry {
            name: "text",
            description: "n-gram logistic regression, cross-validated accuracy",
            space: TextConfig::space(),
            untuned: TextConfig::untuned().to_config(),
        },
        "features" => BenchmarkEntry {
            name: "features",
            description: "ZCA + k-means features with gradient boosting, held-out accuracy",
            space: FeaturesConfig::space(),
            untuned: FeaturesConfig::default().to_config(),
        },
        "sgd" => BenchmarkEntry {
            name: "sgd",
            description: "one-epoch RMSProp MLP on two moons, validation accuracy",
            space: SgdBenchConfig::space(),
            untuned: SgdBenchConfig::default().to_config(),
        },
        "als" => BenchmarkEntry {
            name: "als",
            description: "ALS matrix factorization, negative validation RMSE",
            space: AlsConfig::space(),
            untuned: AlsConfig::default().to_config(),
        },
        "testfn-bowl" => BenchmarkEntry {
            name: "testfn-bowl",
            description: "negated quadratic bowl on [-5,5]^2",
            space: testfn_space((-5.0, 5.0), (-5.0, 5.0)),
            untuned: xy(0.0, 0.0),
        },
        "testfn-rosenbrock" => BenchmarkEntry {
            name: "testfn-rosenbrock",
            description: "negated Rosenbrock on [-2,2]x[-1,3]",
            space: testfn_space((-2.0, 2.0), (-1.0, 3.0)),
            untuned: xy(0.0, 0.0),
        },
        other => {
            return Err(HarnessError::UnknownBenchmark {
                name: other.to_string(),
                valid: BENCHMARK_NAMES.join(", "),
            })
        }
    };
    Ok(entry)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextData {
    pub seed: u64,
    pub n_docs: usize,
    pub vocab_size: usize,
    pub doc_len: usize,
    pub skew: f64,
}

impl Default for TextData {
    fn default() -> Self {
        Self {
            seed: 0,
            n_docs: 400,
            vocab_size: 1000,
            doc_len: 30,
            skew: 0.9,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageData {
    pub seed: u64,
    pub count: usize,
    pub n: usize,
    pub contrast: f64,
}

impl Default for ImageData {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 200,
            n: 12,
            contrast: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoonsData {
    pub seed: u64,
    pub n: usize,
    pub noise: f64,
}

impl Default for MoonsData {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 1000,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingsData {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub noise_sd: f64,
    pub density: f64,
}

impl Default for RatingsData {
    fn default() -> Self {
        Self {
            seed: 0,
            m: 100,
            n: 80,
            rank: 3,
            noise_sd: 0.1,
            density: 0.2,
        }
    }
}

fn params<P: DeserializeOwned>(map: &Map<String, Value>) -> Result<P, HarnessError> {
    serde_json::from_value(Value::Object(map.clone())).map_err(|e| HarnessError::InvalidConfig(format!("synthetic dataset: {e}")))
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path).map(BufReader::new).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn data_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Dataset(e.to_string())
}

fn eval_err(e: impl std::fmt::Display) -> EvalError {
    EvalError(e.to_string())
}

/// Loaded dataset of one benchmark.
pub enum Dataset {
    Text(Corpus),
    Images(ImageSet<f64>),
    Points(PointSet),
    Ratings(RatingsMatrix<f64>),
    None,
}

pub fn load_dataset(benchmark: &str, spec: &DatasetSpec) -> Result<Dataset, HarnessError> {
    registry_lookup(benchmark)?;
    let is_testfn = benchmark.starts_with("testfn-");
    Ok(match spec {
        DatasetSpec::Synthetic(map) => match benchmark {
            "text" => {
                let p: TextData = params(map)?;
                if p.vocab_size < 20 || p.doc_len == 0 {
                    return Err(HarnessError::InvalidConfig("text data needs vocab_size >= 20 and doc_len >= 1".into()));
                }
                Dataset::Text(make_synthetic_corpus(p.seed, p.n_docs, p.vocab_size, p.doc_len, p.skew))
            }
            "features" => {
                let p: ImageData = params(map)?;
                Dataset::Images(make_synthetic_images(p.seed, p.count, p.n, p.contrast))
            }
            "sgd" => {
                let p: MoonsData = params(map)?;
                Dataset::Points(make_two_moons(p.seed, p.n, p.noise))
            }
            "als" => {
                let p: RatingsData = params(map)?;
                Dataset::Ratings(make_synthetic_ratings(p.seed, p.m, p.n, p.rank, p.noise_sd, p.density))
            }
            _ => {
                if !map.is_empty() {
                    return Err(HarnessError::InvalidConfig(format!("{benchmark} takes no dataset parameters")));
                }
                Dataset::None
            }
        },
        DatasetSpec::File(_) if is_testfn => {
            return Err(HarnessError::InvalidConfig(format!("{benchmark} takes no dataset file")));
        }
        DatasetSpec::File(path) => {
            let r = open(path)?;
            match benchmark {
                "text" => Dataset::Text(Corpus::read(r).map_err(data_err)?),
                "features" => Dataset::Images(ImageSet::read_csv(r).map_err(data_err)?),
                "sgd" => Dataset::Points(PointSet::read_csv(r).map_err(data_err)?),
                _ => Dataset::Ratings(RatingsMatrix::read_csv(r).map_err(data_err)?),
            }
        }
    })
}

/// Objective for `benchmark` over `dataset`; `objective_seed` fixes the
/// benchmark's internal randomness.
pub fn build_objective(benchmark: &str, dataset: Dataset, objective_seed: u64) -> Result<Objective, HarnessError> {
    let seed = objective_seed;
    let obj: Objective = match (benchmark, dataset) {
        ("text", Dataset::Text(corpus)) => Arc::new(move |c: &Configuration| {
            let cfg = TextConfig::from_config(c).map_err(eval_err)?;
            cv_objective(&corpus, &cfg, CvSettings::default(), seed).map_err(eval_err)
        }),
        ("features", Dataset::Images(images)) => Arc::new(move |c: &Configuration| {
            let cfg = FeaturesConfig::from_config(c).map_err(eval_err)?;
            pipeline_objective(&images, &cfg.unsup, &cfg.sup, seed).map_err(eval_err)
        }),
        ("sgd", Dataset::Points(points)) => Arc::new(move |c: &Configuration| {
            let cfg = SgdBenchConfig::from_config(c).map_err(eval_err)?;
            sgd_objective(&points, &cfg, seed).map_err(eval_err)
        }),
        ("als", Dataset::Ratings(ratings)) => Arc::new(move |c: &Configuration| {
            let cfg = AlsConfig::from_config(c, seed).map_err(eval_err)?;
            recsys_objective(&ratings, &cfg, seed).map_err(eval_err)
        }),
        ("testfn-bowl", Dataset::None) => {
            let f = TestObjective::Bowl {
                center: BOWL_CENTER.to_vec(),
            };
            Arc::new(move |c: &Configuration| Ok(-f.value(&[c.real("x").map_err(eval_err)?, c.real("y").map_err(eval_err)?])))
        }
        ("testfn-rosenbrock", Dataset::None) => {
            let f = TestObjective::<f64>::Rosenbrock;
            Arc::new(move |c: &Configuration| Ok(-f.value(&[c.real("x").map_err(eval_err)?, c.real("y").map_err(eval_err)?])))
        }
        (name, _) => {
            registry_lookup(name)?;
            return Err(HarnessError::Dataset(format!("dataset does not match benchmark {name}")));
        }
    };
    Ok(obj)
}

/// Writes the default synthetic dataset of `benchmark` (generated with
/// `seed`) in that benchmark's file format.
pub fn gen_data(benchmark: &str, seed: u64, out: &Path) -> Result<(), HarnessError> {
    let mut map = Map::new();
    map.insert("seed".into(), Value::from(seed));
    let spec = DatasetSpec::Synthetic(map);
    let data = load_dataset(benchmark, &spec).map_err(|e| match e {
        HarnessError::InvalidConfig(_) => HarnessError::InvalidConfig(format!("{benchmark} has no dataset to generate")),
        other => other,
    })?;
    let io = |e: std::io::Error| HarnessError::Io {
        path: out.to_path_buf(),
        source: e,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(out).map_err(io)?);
    match data {
        Dataset::Text(c) => c.write(&mut w).map_err(data_err)?,
        Dataset::Images(i) => i.write_csv(&mut w).map_err(data_err)?,
        Dataset::Points(p) => p.write_csv(&mut w).map_err(data_err)?,
        Dataset::Ratings(r) => r.write_csv(&mut w).map_err(data_err)?,
        Dataset::None => return Err(HarnessError::InvalidConfig(format!("{benchmark} has no dataset to generate"))),
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spaces_have_expected_parameters() {
        let als = registry_lookup("als").unwrap();
        let names: Vec<&str> = als.space.params().iter().map(ParamDef::name).collect();
        assert_eq!(names, vec!["log_lambda", "k", "T"]);
        assert_eq!(registry_lookup("text").unwrap().space.len(), 6);
        assert_eq!(registry_lookup("testfn-bowl").unwrap().space.len(), 2);
        let err = registry_lookup("nope").unwrap_err().to_string();
        assert!(err.contains("testfn-rosenbrock"), "{err}");
    }

    #[test]
    fn untuned_configs_are_valid() {
        for name in BENCHMARK_NAMES {
            let e = registry_lookup(name).unwrap();
            assert!(e.space.is_valid(&e.untuned), "{name}");
        }
    }

    #[test]
    fn test_functions_peak_at_their_minima() {
        let bowl = build_objective("testfn-bowl", Dataset::None, 0).unwrap();
        assert_eq!(bowl(&xy(BOWL_CENTER[0], BOWL_CENTER[1])).unwrap(), 0.0);
        assert!(bowl(&xy(0.0, 0.0)).unwrap() < 0.0);
        let rosen = build_objective("testfn-rosenbrock", Dataset::None, 0).unwrap();
        assert_eq!(rosen(&xy(1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn unknown_synthetic_parameter_rejected() {
        let mut map = Map::new();
        map.insert("bogus".into(), Value::from(1));
        assert!(load_dataset("sgd", &DatasetSpec::Synthetic(map.clone())).is_err());
        assert!(load_dataset("testfn-bowl", &DatasetSpec::Synthetic(map)).is_err());
    }
}

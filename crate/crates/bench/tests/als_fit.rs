use hypertune_bench::als::{
    als_fit, als_fit_lambda, als_fit_traced, make_synthetic_ratings, recsys_objective, rmse, split_ratings, AlsConfig,
    FactorModel, RatingsMatrix,
};
use hypertune_core::linalg::Matrix;
use hypertune_core::seeded_rng;
use rand::seq::SliceRandom;

fn cfg(log_lambda: f64, k: usize, t: usize) -> AlsConfig {
    AlsConfig {
        log_lambda,
        k,
        iterations: t,
        seed: 5,
    }
}

#[test]
fn objective_non_increasing_every_half_step() {
    let a = make_synthetic_ratings(1, 30, 20, 3, 0.1, 0.5);
    for (ll, k) in [(-2.0, 3), (0.0, 5), (-4.0, 8)] {
        let (_, hist) = als_fit_traced(&a, &cfg(ll, k, 15), false).unwrap();
        assert_eq!(hist.len(), 31);
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{hist:?}");
        }
    }
}

#[test]
fn rank_one_noiseless_recovery() {
    let u = [1.0, -0.5, 2.0, 0.3, -1.2, 0.8];
    let v = [0.7, 1.1, -0.4, 1.5, -0.9];
    let mut cells: Vec<(usize, usize)> = (0..6).flat_map(|i| (0..5).map(move |j| (i, j))).collect();
    cells.shuffle(&mut seeded_rng(3));
    cells.truncate(24);
    // every row and column must remain observed
    for i in 0..6 {
        assert!(cells.iter().any(|c| c.0 == i));
    }
    for j in 0..5 {
        assert!(cells.iter().any(|c| c.1 == j));
    }
    let entries: Vec<_> = cells.iter().map(|&(i, j)| (i, j, u[i] * v[j])).collect();
    let a = RatingsMatrix::new(6, 5, entries).unwrap();
    let m = als_fit(&a, &cfg(-6.0, 1, 20)).unwrap();
    assert!(rmse(&m, a.entries()).unwrap() < 1e-3);
}

#[test]
fn full_density_exact_rank_recovery() {
    let a = make_synthetic_ratings(4, 12, 10, 2, 0.0, 1.0);
    let (m, _) = als_fit_lambda(&a, 0.0, 2, 50, 1, false).unwrap();
    assert!(rmse(&m, a.entries()).unwrap() < 1e-3);
}

#[test]
fn parallel_matches_sequential_bitwise() {
    let a = make_synthetic_ratings(2, 30, 20, 3, 0.1, 0.5);
    let c = cfg(-1.0, 4, 10);
    let (seq, hs) = als_fit_traced(&a, &c, false).unwrap();
    let (par, hp) = als_fit_traced(&a, &c, true).unwrap();
    let bits = |m: &FactorModel<f64>| {
        m.x.as_slice()
            .iter()
            .chain(m.y.as_slice())
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&seq), bits(&par));
    assert_eq!(hs, hp);
}

#[test]
fn split_sizes_and_disjointness() {
    let a = make_synthetic_ratings(7, 50, 40, 2, 0.1, 0.5);
    assert_eq!(a.len(), 1000);
    let s = split_ratings(&a, (0.8, 0.1, 0.1), 11).unwrap();
    for (got, want) in [(s.train.len(), 800i64), (s.valid.len(), 100), (s.test.len(), 100)] {
        assert!((got as i64 - want).abs() <= 3, "{got} vs {want}");
    }
    let mut all: Vec<(usize, usize)> = [&s.train, &s.valid, &s.test]
        .iter()
        .flat_map(|p| p.entries().iter().map(|e| (e.0, e.1)))
        .collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), 1000);
}

#[test]
fn cold_start_guard_reassigns() {
    // row 2 and column 3 have a single entry each
    let entries = vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0)];
    let a = RatingsMatrix::new(3, 4, entries).unwrap();
    for seed in 0..20 {
        let s = split_ratings(&a, (0.0, 0.5, 0.5), seed).unwrap();
        // with no initial training entries, the guard must cover every row and column
        assert!(s.reassigned >= 4);
        assert_eq!(s.train.len(), s.reassigned);
        let rows: std::collections::BTreeSet<_> = s.train.entries().iter().map(|e| e.0).collect();
        let cols: std::collections::BTreeSet<_> = s.train.entries().iter().map(|e| e.1).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(cols.len(), 4);
    }
}

#[test]
fn synthetic_density_and_determinism() {
    let a = make_synthetic_ratings(9, 60, 50, 3, 0.2, 0.3);
    let density = a.len() as f64 / 3000.0;
    assert!((density - 0.3).abs() <= 0.01, "{density}");
    assert_eq!(a, make_synthetic_ratings(9, 60, 50, 3, 0.2, 0.3));
}

#[test]
fn heavy_regularization_hurts() {
    let a = make_synthetic_ratings(3, 40, 30, 2, 0.1, 0.4);
    let tuned = recsys_objective(&a, &cfg(-1.0, 2, 15), 0).unwrap();
    let heavy = recsys_objective(&a, &cfg(1.0, 2, 15), 0).unwrap();
    assert!(tuned.is_finite() && heavy.is_finite());
    assert!(heavy < tuned, "{heavy} vs {tuned}");
    assert_eq!(tuned, recsys_objective(&a, &cfg(-1.0, 2, 15), 0).unwrap());
}

#[test]
fn rmse_permutation_and_scaling() {
    let a = make_synthetic_ratings(5, 15, 12, 2, 0.3, 0.6);
    let m = als_fit(&a, &cfg(-1.0, 2, 5)).unwrap();
    let mut shuffled = a.entries().to_vec();
    shuffled.shuffle(&mut seeded_rng(1));
    let base = rmse(&m, a.entries()).unwrap();
    assert!((rmse(&m, &shuffled).unwrap() - base).abs() < 1e-12);

    let c = -2.5;
    let scaled_entries: Vec<_> = a.entries().iter().map(|&(i, j, v)| (i, j, c * v)).collect();
    let x = Matrix::from_fn(m.x.rows(), m.x.cols(), |i, j| c * m.x[(i, j)]);
    let scaled = FactorModel { x, y: m.y.clone() };
    assert!((rmse(&scaled, &scaled_entries).unwrap() - c.abs() * base).abs() < 1e-12);
}

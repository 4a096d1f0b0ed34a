use hypertune_bench::sgd::{init_accuracy, make_two_moons, sgd_objective, Mlp, SgdBenchConfig};
use hypertune_core::strategies::{run_loop, BayesOptions, EvalError, StrategyKind};
use hypertune_core::{seeded_rng, Configuration};
use rand::Rng;

#[test]
fn negligible_step_stays_at_initialization() {
    let data = make_two_moons(0, 1000, 0.1);
    for seed in 0..5 {
        let c = SgdBenchConfig {
            log_alpha: -9.0,
            ..SgdBenchConfig::default()
        };
        let acc = sgd_objective(&data, &c, seed).unwrap();
        let base = init_accuracy(&data, c.hidden, seed);
        assert!((acc - base).abs() <= 0.01, "seed {seed}: {acc} vs {base}");
    }
}

#[test]
fn bayes_tuned_config_is_accurate() {
    let data = make_two_moons(0, 1000, 0.1);
    let space = SgdBenchConfig::space();
    let objective = |c: &Configuration| {
        let cfg = SgdBenchConfig::from_config(c).map_err(|e| EvalError(e.to_string()))?;
        sgd_objective(&data, &cfg, 0).map_err(|e| EvalError(e.to_string()))
    };
    let trace = run_loop(StrategyKind::Bayes, &space, objective, 40, 1, &BayesOptions::default());
    let best = trace.final_best().unwrap();
    assert!(best > 0.85, "best {best}");
}

#[test]
fn deterministic_per_seed() {
    let data = make_two_moons(2, 300, 0.1);
    let c = SgdBenchConfig {
        log_alpha: -1.0,
        beta: 0.5,
        ..SgdBenchConfig::default()
    };
    assert_eq!(sgd_objective(&data, &c, 7).unwrap(), sgd_objective(&data, &c, 7).unwrap());
}

#[test]
fn huge_step_on_steep_data_can_fail_cleanly() {
    // a divergence either surfaces as an error or yields a finite accuracy
    let mut data = make_two_moons(3, 200, 0.1);
    for p in &mut data.points {
        p[0] *= 1e200;
    }
    let c = SgdBenchConfig {
        log_alpha: 0.0,
        ..SgdBenchConfig::default()
    };
    match sgd_objective(&data, &c, 0) {
        Ok(a) => assert!((0.0..=1.0).contains(&a)),
        Err(e) => assert_eq!(e.to_string(), "divergent gradient"),
    }
}

fn central_diff(mlp: &Mlp<f64>, xs: &[&[f64]], ys: &[i8], h: f64) -> Vec<f64> {
    let p = mlp.params();
    (0..p.len())
        .map(|i| {
            let mut plus = mlp.clone();
            let mut minus = mlp.clone();
            let mut q = p.clone();
            q[i] += h;
            plus.set_params(&q);
            q[i] -= 2.0 * h;
            minus.set_params(&q);
            (plus.loss_grad(xs, ys).0 - minus.loss_grad(xs, ys).0) / (2.0 * h)
        })
        .collect()
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = seeded_rng(21);
    let data = make_two_moons(5, 16, 0.2);
    let xs: Vec<&[f64]> = data.points.iter().map(Vec::as_slice).collect();
    for _ in 0..10 {
        let mut mlp = Mlp::<f64>::random(2, 6, &mut rng);
        let p: Vec<f64> = mlp.params().iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        mlp.set_params(&p);
        let (_, g) = mlp.loss_grad(&xs, &data.labels);
        let fd = central_diff(&mlp, &xs, &data.labels, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1e-3), "{a} vs {b}");
        }
    }
}

use hypertune_bench::text::*;
use hypertune_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn corpus() -> Corpus {
    make_synthetic_corpus(0, 400, 1000, 30, 0.9)
}

fn examples(c: &Corpus, n_max: usize) -> (Vec<Example>, usize) {
    let vocab = build_vocab(c.docs(), 1, n_max, 0.01, 0.9).unwrap();
    let ex = c
        .docs()
        .iter()
        .zip(c.labels())
        .map(|(d, &y)| Example {
            x: vectorize(&vocab, d),
            y: f64::from(y),
        })
        .collect();
    (ex, vocab.len())
}

#[test]
fn smooth_gradient_matches_central_differences() {
    let c = make_synthetic_corpus(4, 40, 200, 15, 0.9);
    let (ex, dim) = examples(&c, 1);
    let mut rng = seeded_rng(17);
    let (alpha, rho) = (0.05, 0.3);
    // the L1 term is not smooth; the check covers the logistic and L2 parts
    let smooth = |p: &LrParams| lr_objective_value(p, &ex, alpha, rho) - alpha * rho * p.l1();
    let h = 1e-6;
    for _ in 0..10 {
        let theta = LrParams {
            weights: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            intercept: rng.random_range(-1.0..1.0),
        };
        let g = lr_smooth_gradient(&theta, &ex, alpha, rho);
        let coords: Vec<usize> = (0..8).map(|_| rng.random_range(0..dim)).collect();
        for j in coords {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus.weights[j] += h;
            minus.weights[j] -= h;
            let fd = (smooth(&plus) - smooth(&minus)) / (2.0 * h);
            let a = g.weights[j];
            assert!((a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()).max(1e-3), "w{j}: {a} vs {fd}");
        }
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus.intercept += h;
        minus.intercept -= h;
        let fd = (smooth(&plus) - smooth(&minus)) / (2.0 * h);
        assert!((g.intercept - fd).abs() <= 1e-5 * fd.abs().max(1e-3));
    }
}

#[test]
fn objective_decreases_over_epochs() {
    let (ex, dim) = examples(&corpus(), 1);
    let (alpha, rho) = (1e-3, 0.5);
    let mut values = vec![lr_objective_value(&LrParams::zeros(dim), &ex, alpha, rho)];
    let settings = SgdSettings { epochs: 20, eta0: 0.1 };
    train_sgd_monitored(&ex, dim, alpha, rho, settings, 3, |_, p| {
        values.push(lr_objective_value(p, &ex, alpha, rho));
    });
    // running minimum over a 5-epoch window never rises
    let mins: Vec<f64> = values.windows(5).map(|w| w.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    assert!(mins.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{values:?}");
    assert!(values.last().unwrap() < &values[0]);
}

#[test]
fn tuned_config_beats_threshold_and_untuned() {
    let c = corpus();
    let tuned = TextConfig {
        min_n_gram: 1,
        ngram_offset: 2,
        log_min_df: -3.4,
        df_offset: 0.06,
        log_alpha: -2.2,
        rho: 0.4,
    };
    let f = cv_objective(&c, &tuned, CvSettings::default(), 0).unwrap();
    let base = cv_objective(&c, &TextConfig::untuned(), CvSettings::default(), 0).unwrap();
    assert!(f > 0.85, "{f}");
    assert!(base < f, "{base} vs {f}");
}

#[test]
fn no_signal_is_near_chance() {
    let c = make_synthetic_corpus(1, 400, 1000, 30, 0.0);
    let f = cv_objective(&c, &TextConfig::untuned(), CvSettings::default(), 0).unwrap();
    assert!((f - 0.5).abs() < 0.1, "{f}");
}

#[test]
fn label_flip_leaves_accuracy_unchanged() {
    let c = make_synthetic_corpus(2, 120, 300, 20, 0.9);
    let flipped = Corpus::new(c.docs().to_vec(), c.labels().iter().map(|l| -l).collect()).unwrap();
    let cfg = TextConfig::untuned();
    let a = cv_objective(&c, &cfg, CvSettings::default(), 5).unwrap();
    let b = cv_objective(&flipped, &cfg, CvSettings::default(), 5).unwrap();
    assert!((0.0..=1.0).contains(&a));
    // ties at margin 0 predict +1, so exact equality needs no zero margins
    assert!((a - b).abs() < 0.02, "{a} vs {b}");
}

#[test]
fn empty_vocab_propagates_as_error() {
    let c = make_synthetic_corpus(3, 50, 100, 10, 0.9);
    let cfg = TextConfig {
        log_min_df: -1.0,
        df_offset: 0.05,
        ..TextConfig::untuned()
    };
    // no 2- or 3-gram reaches a document frequency in [0.1, 0.15]
    let cfg = TextConfig {
        min_n_gram: 2,
        ngram_offset: 1,
        ..cfg
    };
    let err = cv_objective(&c, &cfg, CvSettings::default(), 0).unwrap_err();
    assert_eq!(err.to_string(), "vocabulary empty");
}

#[test]
fn deterministic_objective() {
    let c = make_synthetic_corpus(6, 100, 300, 20, 0.9);
    let cfg = TextConfig::untuned();
    assert_eq!(
        cv_objective(&c, &cfg, CvSettings::default(), 1).unwrap(),
        cv_objective(&c, &cfg, CvSettings::default(), 1).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vocabulary_independent_of_document_order(seed in 0u64..1000, rot in 0usize..30) {
        let c = make_synthetic_corpus(seed, 30, 100, 8, 0.5);
        let mut docs = c.docs().to_vec();
        docs.rotate_left(rot);
        docs.reverse();
        let a = build_vocab(c.docs(), 1, 2, 0.05, 0.9).unwrap();
        let b = build_vocab(&docs, 1, 2, 0.05, 0.9).unwrap();
        prop_assert_eq!(a, b);
    }
}

use levy_bigjump::functional::estimate_ef;
use levy_bigjump::mc::with_workers;
use levy_bigjump::model::ModelFile;
use levy_bigjump::rarevent::{estimate_ef_stratified, estimate_p_xi_positive};
use levy_bigjump::report::{to_json, without_timestamp, Envelope};
use levy_bigjump::{FSpec, LevyModel, McConfig, TailSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, Poisson};

/// Direct compound Poisson draw of `P{ξ_t > 0}` for the canonical model.
fn naive_positive(t: f64, n: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(t).unwrap();
    let pareto = Pareto::new(1.0, 2.0).unwrap();
    let hits = (0..n)
        .filter(|_| {
            let k = poisson.sample(&mut rng) as u64;
            let s: f64 = (0..k).map(|_| pareto.sample(&mut rng)).sum();
            s > 3.0 * t
        })
        .count();
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn stratified_positivity_agrees_with_direct_sampling() {
    let m = LevyModel::canonical();
    let t = 10.0;
    let s = estimate_p_xi_positive(&m, t, &McConfig::new(100_000, 5)).unwrap();
    let (p, se) = naive_positive(t, 400_000, 77);
    let z = (s.estimate.value - p).abs() / s.estimate.stderr.hypot(se);
    assert!(z < 4.0, "stratified {:?} naive {p}±{se}", s.estimate);
}

#[test]
fn stratified_functional_agrees_with_plain() {
    let m = LevyModel::canonical();
    let f = FSpec::cbre_survival(1.0, 1.0, 1.0);
    let t = 50.0;
    let plain = estimate_ef(&m, &f, t, &McConfig::new(200_000, 9)).unwrap();
    let strat = estimate_ef_stratified(&m, &f, t, &McConfig::new(50_000, 10)).unwrap();
    let z = (plain.value - strat.estimate.value).abs() / plain.combined_stderr(&strat.estimate);
    assert!(z < 3.0, "plain {plain:?} stratified {:?}", strat.estimate);
}

#[test]
fn results_do_not_depend_on_workers() {
    let m = LevyModel::canonical();
    let run = |w| {
        let m = m.clone();
        with_workers(w, move || estimate_p_xi_positive(&m, 25.0, &McConfig::new(20_000, 3)).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(to_json(&one).unwrap(), to_json(&run(2)).unwrap());
}

#[test]
fn envelope_roundtrips_estimates_exactly() {
    let m = LevyModel::canonical();
    let est = estimate_p_xi_positive(&m, 10.0, &McConfig::new(2_000, 1)).unwrap();
    let text = to_json(&Envelope::new(&m, 1, &est)).unwrap();
    let v = without_timestamp(&text).unwrap();
    assert_eq!(v["seed"], 1);
    assert_eq!(v["model_hash"].as_str(), Some(m.model_hash().as_str()));
    assert_eq!(v["result"]["estimate"]["value"].as_f64(), Some(est.estimate.value));
    assert_eq!(v["result"]["estimate"]["stderr"].as_f64(), Some(est.estimate.stderr));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_file_roundtrip_preserves_hash(
        drift in -10.0f64..-0.5,
        sigma in 0.0f64..2.0,
        alpha in 1.1f64..4.0,
        x0 in 0.1f64..5.0,
        scale in 0.1f64..3.0,
    ) {
        let tail = TailSpec::pareto(alpha, x0, scale).unwrap();
        let m = LevyModel::new(drift, sigma, Some(tail)).unwrap();
        let file = m.to_file();
        let text = serde_json::to_string(&file).unwrap();
        let back = LevyModel::try_from(serde_json::from_str::<ModelFile>(&text).unwrap()).unwrap();
        prop_assert_eq!(back.model_hash(), m.model_hash());
    }

    #[test]
    fn tail_inverse_is_consistent(alpha in 1.1f64..4.0, x0 in 0.1f64..5.0, scale in 0.1f64..3.0, u in 0.01f64..0.99) {
        let tail = TailSpec::pareto(alpha, x0, scale).unwrap();
        let v = u * tail.total_rate();
        let x = tail.inverse_tail(v);
        prop_assert!(x >= x0);
        prop_assert!((tail.tail_mass(x) - v).abs() <= 1e-9 * v.max(1.0));
    }

    #[test]
    fn survival_estimate_is_a_probability(t in 1.0f64..30.0, seed in 0u64..1000) {
        let m = LevyModel::canonical();
        let s = estimate_p_xi_positive(&m, t, &McConfig::new(500, seed)).unwrap();
        prop_assert!(s.estimate.value >= 0.0 && s.estimate.value <= 1.0);
        prop_assert!(s.estimate.stderr >= 0.0);
    }
}

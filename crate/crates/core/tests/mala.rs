mod common;

use common::{Flat, Quadratic1};
use logz_lab::ledger::{Metered, QueryLedger};
use logz_lab::mala::*;
use logz_lab::oracle::FunctionInstance;
use logz_lab::qwalk::{discretize_chain, mixing_time, walk_spectrum, GridConfig, Kernel};
use logz_lab::rng;
use logz_lab::stats::{histogram_l1_distance, normal_cdf};

#[test]
fn free_flight_is_always_accepted() {
    let f = Flat(3);
    let run =
        run_mala(&f, &StartLaw::Point(vec![0.0; 3]), 0.7, 2000, &mut rng::stream(1, 0), StepOptions::default(), None)
            .unwrap();
    assert_eq!(run.accepted, 2000);
    assert_eq!(run.acceptance_rate(), 1.0);
}

#[test]
fn small_step_acceptance() {
    let g = FunctionInstance::gaussian(1);
    let run =
        run_mala(&g, &StartLaw::Point(vec![0.0]), 0.05, 10_000, &mut rng::stream(2, 0), StepOptions::default(), None)
            .unwrap();
    assert!(run.acceptance_rate() >= 0.99, "{}", run.acceptance_rate());
}

#[test]
fn lazy_chain_holds_about_half_the_time() {
    let g = FunctionInstance::gaussian(1);
    let run = run_mala(
        &g,
        &StartLaw::Point(vec![0.0]),
        0.1,
        20_000,
        &mut rng::stream(3, 0),
        StepOptions { lazy: true, metropolis: true },
        None,
    )
    .unwrap();
    let frac = run.proposals as f64 / 20_000.0;
    assert!((frac - 0.5).abs() < 0.02, "{frac}");
}

#[test]
fn hmc_queries_per_step() {
    let g = FunctionInstance::gaussian(2);
    let ledger = QueryLedger::new();
    let m = Metered::new(&g, &ledger);
    let mut r = rng::stream(4, 0);
    let mut x = vec![0.3, -0.2];
    for _ in 0..25 {
        let before = ledger.snapshot();
        x = hmc_step(&m, &x, 0.4, &mut r, false).unwrap().0;
        let used = ledger.snapshot().since(&before);
        assert_eq!((used.gradients, used.evaluations), (2, 2));
    }
}

#[test]
fn wrapper_output_matches_the_target_histogram() {
    let q = Quadratic1 { mu: 1.0, l: 4.0 };
    let eps = 0.05;
    let eta = warm_start_eta(4.0, 4.0, 1, 2.0, eps, 4.0, 1.0);
    let w = MixingWrapper::for_target(4.0, 1, eps);
    let run =
        run_mala(&q, &StartLaw::GaussianLinv, eta, 20_000, &mut rng::stream(5, 0), StepOptions::default(), Some(w))
            .unwrap();
    let xs: Vec<f64> = run.samples.iter().map(|x| x[0]).collect();
    let l1 = histogram_l1_distance(&xs, 0.0, 1.0, 30, normal_cdf);
    assert!(l1 <= 0.05, "{l1}");
}

#[test]
fn grid_mixing_time_respects_the_spectral_bounds() {
    let q = Quadratic1 { mu: 1.0, l: 4.0 };
    let eta = warm_start_eta(4.0, 4.0, 1, 2.0, 0.05, 4.0, 1.0);
    let chain = discretize_chain(&q, &GridConfig::centred(&[0.0], 6.0, 200), Kernel::HmcOnestep { eta }).unwrap();
    let delta = walk_spectrum(&chain).unwrap().delta;
    for eps in [0.1, 0.01] {
        let t = mixing_time(&chain, eps, 40).unwrap() as f64;
        let lower = (1.0 / delta - 1.0) * (1.0 / (2.0 * eps)).ln();
        let pi_min = chain.pi.iter().cloned().fold(1.0, f64::min);
        let upper = (1.0 / (eps * pi_min)).ln() / delta;
        assert!(lower <= t && t <= upper, "eps {eps}: {lower} <= {t} <= {upper}");
    }
}

#[test]
fn warmness_of_a_narrow_start() {
    let xs: Vec<f64> = (0..401).map(|i| -6.0 + 0.03 * i as f64).collect();
    let norm = |v: f64| {
        let w: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * v)).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|a| a / s).collect::<Vec<_>>()
    };
    let beta = warmness(&norm(0.25), &norm(1.0)).unwrap();
    // sup of the density ratio N(0, 1/4)/N(0, 1) is 2
    assert!((beta - 2.0).abs() < 1e-2, "{beta}");
}

#[test]
fn step_size_shrinks_with_accuracy() {
    let a = warm_start_eta(4.0, 4.0, 1, 2.0, 1e-2, 0.5, 1.0);
    let b = warm_start_eta(4.0, 4.0, 1, 2.0, 1e-4, 0.5, 1.0);
    assert!(b < a);
    assert!(hmc_step(&Flat(1), &[0.0], -1.0, &mut rng::stream(0, 0), false).is_err());
}

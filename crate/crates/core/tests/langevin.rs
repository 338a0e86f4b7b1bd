mod common;

use logz_lab::langevin::*;
use logz_lab::ledger::{Metered, QueryLedger};
use logz_lab::oracle::{FunctionInstance, NoiseConfig};
use logz_lab::rng;
use logz_lab::stats::{log_log_slope, Moments};

fn gaussian2() -> FunctionInstance {
    FunctionInstance::gaussian(2)
}

#[test]
fn strong_order_slopes() {
    let g = gaussian2();
    let counts = [5, 10, 20, 40];
    let hs: Vec<f64> = counts.iter().map(|&n| 2.0 / n as f64).collect();
    let uld = strong_errors(&g, &[1.0, -0.5], Scheme::Uld, 2.0, &counts, 640, 300, 21).unwrap();
    let rmm = strong_errors(&g, &[1.0, -0.5], Scheme::UldRmm, 2.0, &counts, 640, 300, 21).unwrap();
    let (su, sr) = (log_log_slope(&hs, &uld).unwrap(), log_log_slope(&hs, &rmm).unwrap());
    assert!(su >= 0.8, "ULD slope {su}");
    assert!(sr >= 1.2, "RMM slope {sr}");
}

#[test]
fn long_run_moments() {
    let g = gaussian2();
    let (mut mx, mut mv) = (Moments::new(), Moments::new());
    let mut inc = Independent::new(rng::stream(4, 0));
    let mut grad = GradientOracle::exact(&g);
    let mut integ = Integrator::new(2);
    let mut s = PhaseState::at_rest(vec![0.0, 0.0]);
    for k in 0..400_000u64 {
        integ.step(Scheme::Uld, &mut grad, &mut s, k as f64 * 0.01, 0.01, &mut inc);
        if k >= 5_000 {
            for i in 0..2 {
                mx.push(s.x[i]);
                mv.push(s.v[i]);
            }
        }
    }
    assert!((mx.variance() - 1.0).abs() < 0.05, "var x {}", mx.variance());
    assert!((mv.variance() - 1.0).abs() < 0.05, "var v {}", mv.variance());
}

#[test]
fn rmm_stationary_variance_with_large_smoothness() {
    let q = common::Quadratic1 { mu: 4.0, l: 4.0 };
    let cfg = ChainConfig::exact(Scheme::UldRmm, 0.05, 8.0);
    let end = final_states(&q, &[0.0], &cfg, 20_000, 2).unwrap();
    let xs: Vec<f64> = end.iter().map(|s| s.x[0]).collect();
    let vs: Vec<f64> = end.iter().map(|s| s.v[0]).collect();
    // x ~ N(0, 1/4), v ~ N(0, 1/L)
    assert!((logz_lab::stats::variance(&xs) / 0.25 - 1.0).abs() < 0.05);
    assert!((logz_lab::stats::variance(&vs) / 0.25 - 1.0).abs() < 0.05);
}

#[test]
fn zero_noise_follows_the_deterministic_flow() {
    // With no noise and f = x²/2, L = 1 the ULD mean solves x'' + 2x' + x = 0 exactly.
    let g = FunctionInstance::gaussian(1);
    let cfg = ChainConfig::exact(Scheme::Uld, 0.25, 2.0);
    let traj = run_chain(&g, &[1.0], &cfg, &mut ZeroNoise { alpha: 0.5 }, rng::stream(0, 0)).unwrap();
    let t = 2.0f64;
    let exact = (1.0 + t) * (-t).exp();
    // frozen-gradient error is O(h) on this horizon
    assert!((traj.last().unwrap().x[0] - exact).abs() < 0.05);
}

#[test]
fn noisy_gradients_stay_within_twice_the_exact_error() {
    let g = gaussian2();
    let noise = NoiseConfig::new(2, 1.0, 0.0, 100.0, 1.0).unwrap();
    for scheme in [Scheme::Uld, Scheme::UldRmm] {
        let exact = ChainConfig::exact(scheme, 0.1, 6.0);
        let noisy = ChainConfig { grad: GradMode::Noisy(noise), ..exact };
        let w = |c: &ChainConfig| {
            let xs: Vec<Vec<f64>> =
                final_states(&g, &[3.0, 3.0], c, 10_000, 6).unwrap().into_iter().map(|s| s.x).collect();
            w2_gaussian(&xs, &[0.0, 0.0], &[1.0, 1.0]).unwrap()
        };
        let (a, b) = (w(&exact), w(&noisy));
        assert!(b <= 2.0 * a, "{scheme:?}: exact {a}, noisy {b}");
    }
}

#[test]
fn gradient_queries_per_step() {
    let g = gaussian2();
    for (scheme, per) in [(Scheme::Uld, 1), (Scheme::UldRmm, 2)] {
        let ledger = QueryLedger::new();
        let m = Metered::new(&g, &ledger);
        let mut grad = GradientOracle::exact(&m);
        let mut inc = Independent::new(rng::stream(1, 0));
        let mut s = PhaseState::at_rest(vec![0.5, 0.5]);
        let mut integ = Integrator::new(2);
        for k in 0..37 {
            let before = ledger.snapshot();
            integ.step(scheme, &mut grad, &mut s, k as f64 * 0.1, 0.1, &mut inc);
            assert_eq!(ledger.snapshot().since(&before).gradients, per);
        }
        assert_eq!(ledger.snapshot().evaluations, 0);
    }
}

#[test]
fn path_increments_have_the_prescribed_covariance() {
    let h = 0.3;
    let target = increment_covariance(h, None);
    let n = 40_000;
    let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
    let mut w1 = [0.0];
    let mut w2 = [0.0];
    for r in 0..n {
        // refine a coarse path at an interior point before reading a step
        let mut path = BrownianPath::new(1, 1.0, 2, rng::stream(3, r), rng::stream(3, n + r));
        path.uld(0.2, h, &mut w1, &mut w2);
        s11 += w1[0] * w1[0];
        s12 += w1[0] * w2[0];
        s22 += w2[0] * w2[0];
    }
    let nf = n as f64;
    for (got, want) in [(s11 / nf, target.cov[0][0]), (s12 / nf, target.cov[0][1]), (s22 / nf, target.cov[1][1])] {
        assert!((got - want).abs() < 0.04 * target.cov[0][0].max(want.abs()), "{got} vs {want}");
    }
}

#[test]
fn same_seed_same_trajectory() {
    let g = gaussian2();
    let cfg = ChainConfig::exact(Scheme::UldRmm, 0.1, 1.0);
    let run = || run_chain(&g, &[1.0, 1.0], &cfg, &mut Independent::new(rng::stream(9, 0)), rng::stream(9, 1)).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn trajectory_csv_round_trips_values() {
    let g = gaussian2();
    let cfg = ChainConfig::exact(Scheme::Uld, 0.5, 1.0);
    let traj = run_chain(&g, &[1.0, 2.0], &cfg, &mut Independent::new(rng::stream(2, 0)), rng::stream(2, 1)).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &traj).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    let s = traj.last().unwrap();
    assert_eq!(last, [s.x.clone(), s.v.clone()].concat());
}

use logz_lab::langevin::Scheme;
use logz_lab::mlmc::*;
use logz_lab::oracle::FunctionInstance;

fn payoff(x: &[f64]) -> f64 {
    (x[0] * x[0] + x[1] * x[1]).min(10.0)
}

/// `E[min(|x|², 10)]` under the exact law at `t = 1` of ULD for
/// `f = |x|²/2`, `L = 1`, started at rest: per coordinate
/// `x(t) ~ N(x0 (1 + t) e^{-t}, 1 - e^{-2t}(1 + 2t + 2t²))`.
fn exact_reference(x0: &[f64], n: usize) -> f64 {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let t = 1.0f64;
    let var = 1.0 - (-2.0 * t).exp() * (1.0 + 2.0 * t + 2.0 * t * t);
    let means: Vec<f64> = x0.iter().map(|x| x * (1.0 + t) * (-t).exp()).collect();
    let mut r = logz_lab::rng::stream(99, 0);
    let total: f64 = (0..n)
        .map(|_| {
            let x: Vec<f64> = means.iter().map(|m| m + var.sqrt() * r.sample::<f64, _>(StandardNormal)).collect();
            payoff(&x)
        })
        .sum();
    total / n as f64
}

#[test]
fn fitted_rates() {
    let g = FunctionInstance::gaussian(2);
    let uld = LangevinLevels::new(&g, payoff, vec![1.5, 0.5], 1.0, Scheme::Uld).unwrap();
    let st = level_statistics(&uld, &[10_000; 8], 3);
    let (a, b, _) = fit_rates(&st[2..]).unwrap();
    assert!((0.7..=1.3).contains(&a) && (1.5..=2.5).contains(&b), "ULD alpha {a} beta {b}");
    let rmm = LangevinLevels::new(&g, payoff, vec![1.5, 0.5], 1.0, Scheme::UldRmm).unwrap();
    let st = level_statistics(&rmm, &[10_000; 7], 3);
    let (a, _, _) = fit_rates(&st[2..]).unwrap();
    assert!(a >= 1.2, "RMM alpha {a}");
}

#[test]
fn estimate_matches_the_exact_law() {
    let g = FunctionInstance::gaussian(2);
    let reference = exact_reference(&[1.5, 0.5], 1_000_000);
    for scheme in [Scheme::Uld, Scheme::UldRmm] {
        let lv = LangevinLevels::new(&g, payoff, vec![1.5, 0.5], 1.0, scheme).unwrap();
        let r = mlmc_estimate(&lv, 0.05, 0).unwrap();
        assert!((r.estimate - reference).abs() <= 0.05, "{scheme:?}: {} vs {reference}", r.estimate);
        assert_eq!(r.levels.len(), r.levels.last().unwrap().level + 1);
    }
}

#[test]
fn level_costs_and_steps() {
    let g = FunctionInstance::gaussian(2);
    let lv = LangevinLevels::new(&g, payoff, vec![1.0, 0.0], 1.0, Scheme::UldRmm).unwrap().with_base_steps(4);
    assert_eq!(lv.steps(0), 4);
    assert_eq!(lv.steps(3), 32);
    assert_eq!(lv.cost(0), 8.0);
    assert_eq!(lv.cost(2), 2.0 * 1.5 * 16.0);
}

#[test]
fn coupled_samples_are_reproducible() {
    let g = FunctionInstance::gaussian(2);
    let lv = LangevinLevels::new(&g, payoff, vec![1.0, 0.0], 1.0, Scheme::Uld).unwrap();
    assert_eq!(coupled_level_sample(&lv, 3, 5, 17), coupled_level_sample(&lv, 3, 5, 17));
    assert_ne!(coupled_level_sample(&lv, 3, 5, 17), coupled_level_sample(&lv, 3, 5, 18));
}

#[test]
fn level_csv_has_one_row_per_level() {
    let g = FunctionInstance::gaussian(2);
    let lv = LangevinLevels::new(&g, payoff, vec![1.0, 0.0], 1.0, Scheme::Uld).unwrap();
    let st = level_statistics(&lv, &[200, 100, 50], 1);
    let mut buf = Vec::new();
    write_level_csv(&mut buf, &st).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "l,n_l,mean_diff,V_l,C_l,N_l");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("2,4,"));
    assert!(lines[3].ends_with(",50"));
}

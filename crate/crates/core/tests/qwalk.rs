mod common;

use std::f64::consts::PI;

use common::{grid_normal, Quadratic1};
use logz_lab::anneal::build_schedule;
use logz_lab::mala::warm_start_eta;
use logz_lab::oracle::{FunctionInstance, LogisticInstance};
use logz_lab::qwalk::*;
use logz_lab::Potential;

#[test]
fn reference_chain_spectra() {
    let chains = reference_chains().unwrap();
    assert!(chains.len() >= 5);
    for (name, c) in &chains {
        let s = walk_spectrum(c).unwrap();
        assert_eq!(s.phases.len(), c.len() * c.len(), "{name}");
        assert!(s.dense_residual.unwrap() <= 1e-8, "{name}: {:?}", s.dense_residual);
        assert!(s.phase_gap >= (2.0 * s.delta).sqrt() - 1e-6, "{name}");
    }
}

#[test]
fn two_state_phases() {
    let (_, c) = reference_chains().unwrap().into_iter().find(|(n, _)| *n == "two_state").unwrap();
    let s = walk_spectrum(&c).unwrap();
    let want = [0.0, PI / 2.0, -PI / 2.0, PI];
    for (a, b) in s.phases.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{:?}", s.phases);
    }
    assert!((s.phase_gap - PI / 2.0).abs() < 1e-12);
    assert!((s.delta - 1.0).abs() < 1e-12);
}

#[test]
fn hmc_grid_chain_is_reversible() {
    let g = FunctionInstance::gaussian(1);
    let c = discretize_chain(&g, &GridConfig::centred(&[0.0], 5.0, 64), Kernel::HmcOnestep { eta: 0.5 }).unwrap();
    assert!(c.balance_residual() <= 1e-10);
    assert!(c.stationarity_residual() <= 1e-10);
}

#[test]
fn large_chain_spectrum_skips_the_dense_check() {
    let g = FunctionInstance::gaussian(1);
    let c = discretize_chain(&g, &GridConfig::centred(&[0.0], 5.0, 64), Kernel::MhGaussian { eta: 0.5 }).unwrap();
    let s = walk_spectrum(&c).unwrap();
    assert!(s.dense_residual.is_none());
    assert_eq!(s.phases.len(), 64 * 64);
    assert!(s.phase_gap >= (2.0 * s.delta).sqrt() - 1e-6);
}

#[test]
fn schedule_overlaps_stay_large() {
    let insts = [
        FunctionInstance::gaussian(1),
        FunctionInstance::gaussian(2),
        FunctionInstance::Logistic(LogisticInstance::random(2, 5, 1.0, 2.0, 3).unwrap()),
    ];
    for inst in &insts {
        let s = build_schedule(inst.dim(), inst.smoothness(), inst.convexity(), 0.05).unwrap();
        let ov = schedule_overlaps(inst, &s, if inst.dim() == 1 { 400 } else { 60 }).unwrap();
        assert_eq!(ov.len(), s.stages() + 1);
        assert!(ov.iter().all(|&o| (0.5..=1.0 + 1e-12).contains(&o)), "{ov:?}");
    }
}

#[test]
fn gaussian_overlap_matches_the_grid() {
    // consecutive Gaussian stages of f = x²/2 have precisions 1 + σ⁻²
    let g = FunctionInstance::gaussian(1);
    let s = build_schedule(1, 1.0, 1.0, 0.1).unwrap();
    let i = 2;
    let grid = qsample_overlap(&g, &s, i, 400).unwrap();
    let closed = gaussian_bhattacharyya(1.0 / (1.0 + s.inv_sigma_sq(i)), 1.0 / (1.0 + s.inv_sigma_sq(i + 1)));
    assert!((grid - closed).abs() < 1e-6, "{grid} vs {closed}");
}

#[test]
fn warm_start_profile() {
    let q = Quadratic1 { mu: 1.0, l: 4.0 };
    let eps = 1e-2;
    let eta = warm_start_eta(4.0, 4.0, 1, 2.0, eps, 0.5, 1.0);
    let c = discretize_chain(&q, &GridConfig::centred(&[0.0], 6.0, 128), Kernel::HmcOnestep { eta }).unwrap();
    let rho0 = grid_normal(&c.grid, 0.25);
    let prof = effective_gap_profile(&c, &rho0, eps).unwrap();
    assert!((prof.beta - 2.0).abs() < 0.05, "{}", prof.beta);
    // odd modes are orthogonal to an even start
    let odd = prof.modes.iter().skip(1).step_by(2).map(|m| m.overlap).fold(0.0, f64::max);
    assert!(odd < 1e-8, "{odd}");
    let total: f64 = prof.modes.iter().map(|m| m.overlap * m.overlap).sum();
    assert!(total <= 1.0 + 1e-9);
}

#[test]
fn spectrum_csv_lists_every_phase() {
    let (_, c) = reference_chains().unwrap().into_iter().find(|(n, _)| *n == "birth_death_3").unwrap();
    let s = walk_spectrum(&c).unwrap();
    let mut buf = Vec::new();
    write_spectrum_csv(&mut buf, &s, None).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("lambda,phase,overlap\n"));
    assert!(text.lines().count() >= 4);
}

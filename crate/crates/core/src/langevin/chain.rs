use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::brownian::{BrownianPath, IncrementSource, Independent};
use super::integrator::Integrator;
use super::{uld_covariance, GradMode, GradientOracle, PhaseState, Scheme};
use crate::error::{check_dim, Error, Result};
use crate::oracle::Potential;
use crate::rng::{self, StreamRng};
use crate::stats::coordinate_moments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub h: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub grad: GradMode,
}

impl ChainConfig {
    pub fn exact(scheme: Scheme, h: f64, t_end: f64) -> Self {
        Self { h, t_end, scheme, grad: GradMode::Exact }
    }

    fn validate(&self) -> Result<usize> {
        uld_covariance(self.h)?;
        if !(self.t_end >= self.h) {
            return Err(Error::invalid("t_end", format!("horizon {} shorter than step {}", self.t_end, self.h)));
        }
        Ok(n_steps(self.h, self.t_end))
    }
}

/// `⌊T/h⌋`, tolerant to rounding when `T` is a multiple of `h`.
pub fn n_steps(h: f64, t_end: f64) -> usize {
    (t_end / h + 1e-9).floor() as usize
}

/// Runs one chain from `(x0, 0)` and returns every state, `n_steps + 1` in all.
pub fn run_chain<P, I>(
    p: &P,
    x0: &[f64],
    cfg: &ChainConfig,
    inc: &mut I,
    noise_rng: StreamRng,
) -> Result<Vec<PhaseState>>
where
    P: Potential + ?Sized,
    I: IncrementSource + ?Sized,
{
    check_dim(p.dim(), x0.len())?;
    let n = cfg.validate()?;
    let mut grad = GradientOracle::new(p, &cfg.grad, noise_rng);
    let mut integ = Integrator::new(p.dim());
    let mut state = PhaseState::at_rest(x0.to_vec());
    let mut out = Vec::with_capacity(n + 1);
    out.push(state.clone());
    for k in 0..n {
        integ.step(cfg.scheme, &mut grad, &mut state, k as f64 * cfg.h, cfg.h, inc);
        out.push(state.clone());
    }
    Ok(out)
}

/// Like [`run_chain`] but keeps only the final state.
pub fn run_to_end<P, I>(
    p: &P,
    start: PhaseState,
    cfg: &ChainConfig,
    inc: &mut I,
    noise_rng: StreamRng,
) -> Result<PhaseState>
where
    P: Potential + ?Sized,
    I: IncrementSource + ?Sized,
{
    check_dim(p.dim(), start.x.len())?;
    let n = cfg.validate()?;
    let mut grad = GradientOracle::new(p, &cfg.grad, noise_rng);
    let mut integ = Integrator::new(p.dim());
    let mut state = start;
    for k in 0..n {
        integ.step(cfg.scheme, &mut grad, &mut state, k as f64 * cfg.h, cfg.h, inc);
    }
    Ok(state)
}

/// Final states of `replicas` independent chains started at `x0`.
///
/// Replica `r` uses stream `2r` of `seed` for the Brownian increments and
/// stream `2r + 1` for gradient noise, so exact and noisy runs with the same
/// seed share their Brownian draws.
pub fn final_states<P: Potential + ?Sized>(
    p: &P,
    x0: &[f64],
    cfg: &ChainConfig,
    replicas: usize,
    seed: u64,
) -> Result<Vec<PhaseState>> {
    check_dim(p.dim(), x0.len())?;
    cfg.validate()?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut inc = Independent::new(rng::stream(seed, 2 * r));
            run_to_end(p, PhaseState::at_rest(x0.to_vec()), cfg, &mut inc, rng::stream(seed, 2 * r + 1))
        })
        .collect()
}

/// Bures–Wasserstein distance between the Gaussian fitted to `samples`
/// (mean and per-coordinate variance) and `N(mean, diag(cov_diag))`.
///
/// Exact when both laws are Gaussian with diagonal covariance; for other
/// laws it compares only the first two moments.
pub fn w2_gaussian(samples: &[Vec<f64>], mean: &[f64], cov_diag: &[f64]) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::InsufficientSamples { needed: 100, got: samples.len() });
    }
    check_dim(mean.len(), cov_diag.len())?;
    for s in samples {
        check_dim(mean.len(), s.len())?;
    }
    let (m, v) = coordinate_moments(samples);
    let mut w2 = 0.0;
    for i in 0..mean.len() {
        w2 += (m[i] - mean[i]).powi(2) + (v[i].sqrt() - cov_diag[i].sqrt()).powi(2);
    }
    Ok(w2.sqrt())
}

/// Root-mean-square distance at `t_end` between chains run with `t_end/n`
/// for each `n` in `step_counts` and a reference run with `ref_steps` steps,
/// all driven by one Brownian path per replica.
///
/// This is the synchronous-coupling upper bound on the W2 error against the
/// diffusion at `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn strong_errors<P: Potential + ?Sized>(
    p: &P,
    x0: &[f64],
    scheme: Scheme,
    t_end: f64,
    step_counts: &[usize],
    ref_steps: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_dim(p.dim(), x0.len())?;
    if step_counts.iter().any(|&n| n == 0 || n > ref_steps) || !(t_end > 0.0) {
        return Err(Error::invalid("step_counts", "need 0 < n <= ref_steps and a positive horizon"));
    }
    let sq: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut path =
                BrownianPath::new(p.dim(), t_end, ref_steps, rng::stream(seed, 2 * r), rng::stream(seed, 2 * r + 1));
            let end = |n: usize, path: &mut BrownianPath<StreamRng>| {
                let cfg = ChainConfig::exact(scheme, t_end / n as f64, t_end);
                let mut grad = GradientOracle::exact(p);
                let mut integ = Integrator::new(p.dim());
                let mut state = PhaseState::at_rest(x0.to_vec());
                for k in 0..n {
                    integ.step(scheme, &mut grad, &mut state, k as f64 * cfg.h, cfg.h, path);
                }
                state.x
            };
            let reference = end(ref_steps, &mut path);
            step_counts.iter().map(|&n| crate::stats::dist_sq(&end(n, &mut path), &reference)).collect()
        })
        .collect();
    Ok((0..step_counts.len()).map(|j| (sq.iter().map(|e| e[j]).sum::<f64>() / replicas as f64).sqrt()).collect())
}

/// CSV with columns `step, x0.., v0..`.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &[PhaseState]) -> std::io::Result<()> {
    let d = traj.first().map_or(0, |s| s.x.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..d).map(|i| format!("v{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (k, s) in traj.iter().enumerate() {
        let cells: Vec<String> = s.x.iter().chain(&s.v).map(|c| format!("{c:.16e}")).collect();
        writeln!(w, "{k},{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Metered, QueryLedger};
    use crate::oracle::FunctionInstance;

    #[test]
    fn single_step_horizon() {
        let inst = FunctionInstance::gaussian(2);
        let cfg = ChainConfig::exact(Scheme::Uld, 0.1, 0.1);
        let traj =
            run_chain(&inst, &[0.0, 0.0], &cfg, &mut Independent::new(rng::stream(0, 0)), rng::stream(0, 1)).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj[0].v, vec![0.0, 0.0]);
        let bad = ChainConfig::exact(Scheme::Uld, 0.1, 0.05);
        assert!(
            run_chain(&inst, &[0.0, 0.0], &bad, &mut Independent::new(rng::stream(0, 0)), rng::stream(0, 1)).is_err()
        );
    }

    #[test]
    fn gradient_counts_per_step() {
        let inst = FunctionInstance::gaussian(3);
        for (scheme, per) in [(Scheme::Uld, 1), (Scheme::UldRmm, 2)] {
            let ledger = QueryLedger::new();
            let m = Metered::new(&inst, &ledger);
            let cfg = ChainConfig::exact(scheme, 0.05, 1.0);
            let traj =
                run_chain(&m, &[1.0, 0.0, 0.0], &cfg, &mut Independent::new(rng::stream(1, 0)), rng::stream(1, 1))
                    .unwrap();
            assert_eq!(traj.len(), 21);
            assert_eq!(ledger.snapshot().gradients, 20 * per);
            assert_eq!(ledger.snapshot().evaluations, 0);
        }
    }

    #[test]
    fn strong_error_shrinks_with_step() {
        let inst = FunctionInstance::gaussian(1);
        let e = strong_errors(&inst, &[1.0], Scheme::Uld, 1.0, &[4, 16], 64, 200, 3).unwrap();
        assert!(e[1] < e[0] && e[1] > 0.0, "{e:?}");
        assert!(strong_errors(&inst, &[1.0], Scheme::Uld, 1.0, &[128], 64, 10, 3).is_err());
    }

    #[test]
    fn w2_examples() {
        let point = vec![vec![0.0]; 200];
        assert!((w2_gaussian(&point, &[0.0], &[1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(w2_gaussian(&point[..50], &[0.0], &[1.0]).is_err());
        let shifted: Vec<Vec<f64>> = (0..1000).map(|i| vec![3.0 + ((i % 2) as f64 - 0.5) * 2.0]).collect();
        // mean 3, variance ~1: distance to N(0, 1) is ~3
        let d = w2_gaussian(&shifted, &[0.0], &[1.0]).unwrap();
        assert!((d - 3.0).abs() < 0.06, "{d}");
    }

    #[test]
    fn trajectory_csv_layout() {
        let traj = vec![PhaseState::at_rest(vec![1.0, 2.0])];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,x0,x1,v0,v1\n0,1.0000000000000000e0,"));
    }
}

//! Multilevel Monte Carlo over coupled Langevin discretizations.
//!
//! Level `l` integrates to time `T` with `2^l` steps. Fine and coarse
//! levels share one Brownian path, so `P_l - P_{l-1}` has small variance.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::langevin::{BrownianPath, GradientOracle, Integrator, PhaseState, Scheme};
use crate::oracle::Potential;
use crate::rng::{self, stream_id};
use crate::stats::{linear_fit, Moments};

const PILOT: usize = 100;
const MAX_LEVEL: usize = 12;
const ALPHA_SALT: u64 = 0x5851_F42D_4C95_7F2D;
const START_SALT: u64 = 0x1405_7B7E_F767_814F;

/// Summary of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub n_steps: u64,
    pub mean_diff: f64,
    pub var_diff: f64,
    /// Gradient calls per sample.
    pub cost: f64,
    pub samples: u64,
    /// Samples dropped because a trajectory went non-finite.
    pub rejected: u64,
}

/// Produces coupled differences `P_l - P_{l-1}` with `P_{-1} = 0`.
pub trait LevelSampler: Sync {
    /// `(P_l, P_{l-1})` for sample `index`; `None` if the path blew up.
    fn pair(&self, level: usize, seed: u64, index: u64) -> Option<(f64, f64)>;

    /// Gradient calls per coupled sample.
    fn cost(&self, level: usize) -> f64;

    /// Fine-level step count.
    fn steps(&self, level: usize) -> u64 {
        1 << level
    }
}

/// Langevin levels for `E[payoff(X_T)]` started at rest from a point drawn
/// uniformly from `starts`; fine and coarse share the start.
pub struct LangevinLevels<'a, P: ?Sized, F> {
    pub potential: &'a P,
    pub payoff: F,
    pub starts: Vec<Vec<f64>>,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Steps on level 0; level `l` uses `base_steps·2^l`.
    pub base_steps: u64,
}

impl<'a, P, F> LangevinLevels<'a, P, F>
where
    P: Potential + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(potential: &'a P, payoff: F, x0: Vec<f64>, t_end: f64, scheme: Scheme) -> Result<Self> {
        Self::with_starts(potential, payoff, vec![x0], t_end, scheme)
    }

    pub fn with_starts(potential: &'a P, payoff: F, starts: Vec<Vec<f64>>, t_end: f64, scheme: Scheme) -> Result<Self> {
        if starts.is_empty() {
            return Err(Error::invalid("starts", "need at least one start"));
        }
        for x in &starts {
            check_dim(potential.dim(), x.len())?;
        }
        if !(t_end > 0.0) {
            return Err(Error::invalid("t_end", "must be positive"));
        }
        Ok(Self { potential, payoff, starts, t_end, scheme, base_steps: 1 })
    }

    pub fn with_base_steps(mut self, n: u64) -> Self {
        self.base_steps = n.max(1);
        self
    }

    fn integrate(&self, x0: &[f64], path: &mut BrownianPath<rng::StreamRng>, steps: u64) -> Option<f64> {
        let h = self.t_end / steps as f64;
        let mut grad = GradientOracle::exact(self.potential);
        let mut integ = Integrator::new(x0.len());
        let mut s = PhaseState::at_rest(x0.to_vec());
        for k in 0..steps {
            integ.step(self.scheme, &mut grad, &mut s, k as f64 * h, h, path);
        }
        s.is_finite().then(|| (self.payoff)(&s.x))
    }
}

impl<P, F> LevelSampler for LangevinLevels<'_, P, F>
where
    P: Potential + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn pair(&self, level: usize, seed: u64, index: u64) -> Option<(f64, f64)> {
        let id = stream_id(level as u64 + 1, index);
        let fine_steps = self.steps(level);
        let x0 = if self.starts.len() == 1 {
            &self.starts[0]
        } else {
            &self.starts[rng::stream(seed ^ START_SALT, id).random_range(0..self.starts.len())]
        };
        let mut path = BrownianPath::new(
            x0.len(),
            self.t_end,
            fine_steps as usize,
            rng::stream(seed, id),
            rng::stream(seed ^ ALPHA_SALT, id),
        );
        let fine = self.integrate(x0, &mut path, fine_steps)?;
        let coarse = if level == 0 { 0.0 } else { self.integrate(x0, &mut path, fine_steps / 2)? };
        Some((fine, coarse))
    }

    fn cost(&self, level: usize) -> f64 {
        let per = self.scheme.gradients_per_step() as f64;
        let fine = self.steps(level) as f64;
        per * if level == 0 { fine } else { 1.5 * fine }
    }

    fn steps(&self, level: usize) -> u64 {
        self.base_steps << level
    }
}

/// One coupled difference `P_l - P_{l-1}`.
pub fn coupled_level_sample<S: LevelSampler + ?Sized>(s: &S, level: usize, seed: u64, index: u64) -> Option<f64> {
    s.pair(level, seed, index).map(|(f, c)| f - c)
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    m: Moments,
    rejected: u64,
}

fn run_level<S: LevelSampler + ?Sized>(s: &S, level: usize, seed: u64, from: u64, to: u64) -> Acc {
    (from..to)
        .into_par_iter()
        .fold(Acc::default, |mut a, k| {
            match coupled_level_sample(s, level, seed, k) {
                Some(v) if v.is_finite() => a.m.push(v),
                _ => a.rejected += 1,
            }
            a
        })
        .reduce(Acc::default, |mut a, b| {
            a.m.merge(&b.m);
            a.rejected += b.rejected;
            a
        })
}

/// Fixed-allocation run: `samples[l]` coupled samples on level `l`.
pub fn level_statistics<S: LevelSampler + ?Sized>(s: &S, samples: &[u64], seed: u64) -> Vec<LevelStats> {
    samples.iter().enumerate().map(|(l, &n)| stats_of(l, &run_level(s, l, seed, 0, n), s.cost(l), s.steps(l))).collect()
}

fn stats_of(level: usize, a: &Acc, cost: f64, n_steps: u64) -> LevelStats {
    LevelStats {
        level,
        n_steps,
        mean_diff: a.m.mean,
        var_diff: a.m.variance(),
        cost,
        samples: a.m.count,
        rejected: a.rejected,
    }
}

/// Output of [`mlmc_estimate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlmcResult {
    pub estimate: f64,
    pub levels: Vec<LevelStats>,
    pub total_cost: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Adaptive MLMC targeting root-mean-square error `eps`.
///
/// The mean-square budget is split evenly: sampling variance `eps²/2`
/// with `N_l ∝ sqrt(V_l/C_l)`, and squared bias `eps²/2`. The bias is
/// extrapolated from the finest levels with a fitted weak rate `α`.
pub fn mlmc_estimate<S: LevelSampler + ?Sized>(s: &S, eps: f64, seed: u64) -> Result<MlmcResult> {
    if !(eps > 0.0 && eps < (-1.0f64).exp()) {
        return Err(Error::invalid("eps", format!("must lie in (0, 1/e), got {eps}")));
    }
    let mut accs: Vec<Acc> = Vec::new();
    let mut top = 2usize;
    let mut target: Vec<u64> = vec![PILOT as u64; top + 1];
    loop {
        for l in 0..=top {
            if l == accs.len() {
                accs.push(Acc::default());
            }
            let have = accs[l].m.count + accs[l].rejected;
            if target[l] > have {
                let extra = run_level(s, l, seed, have, target[l]);
                accs[l].m.merge(&extra.m);
                accs[l].rejected += extra.rejected;
            }
        }
        let v: Vec<f64> = accs.iter().map(|a| a.m.variance().max(1e-300)).collect();
        let c: Vec<f64> = (0..=top).map(|l| s.cost(l)).collect();
        let sum: f64 = v.iter().zip(&c).map(|(v, c)| (v * c).sqrt()).sum();
        let optimal: Vec<u64> =
            v.iter().zip(&c).map(|(v, c)| (2.0 / (eps * eps) * (v / c).sqrt() * sum).ceil() as u64).collect();
        let mut grew = false;
        for l in 0..=top {
            let have = accs[l].m.count + accs[l].rejected;
            if optimal[l] > have + have / 100 {
                target[l] = optimal[l];
                grew = true;
            }
        }
        if grew {
            continue;
        }
        let means: Vec<f64> = accs.iter().map(|a| a.m.mean.abs()).collect();
        let alpha = weak_rate(&means).max(0.5);
        let scale = 2f64.powf(alpha);
        let remaining = means[top].max(means[top - 1] / scale) / (scale - 1.0);
        if remaining <= eps / 2f64.sqrt() {
            let levels: Vec<LevelStats> = (0..=top).map(|l| stats_of(l, &accs[l], c[l], s.steps(l))).collect();
            let total_cost = levels.iter().map(|x| x.cost * x.samples as f64).sum();
            let beta = variance_rate(&v);
            return Ok(MlmcResult {
                estimate: levels.iter().map(|x| x.mean_diff).sum(),
                levels,
                total_cost,
                alpha,
                beta,
            });
        }
        if top == MAX_LEVEL {
            return Err(Error::RateFit(format!("bias still above eps/√2 at level {MAX_LEVEL}")));
        }
        top += 1;
        target.push(PILOT as u64);
    }
}

/// `-slope` of `log2 |mean_l|` over levels `1..`, on the finest three.
fn weak_rate(means: &[f64]) -> f64 {
    let lo = means.len().saturating_sub(3).max(1);
    let xs: Vec<f64> = (lo..means.len()).map(|l| l as f64).collect();
    let ys: Vec<f64> = means[lo..].iter().map(|m| m.max(1e-300).log2()).collect();
    linear_fit(&xs, &ys).map_or(0.5, |(slope, _)| -slope)
}

fn variance_rate(v: &[f64]) -> f64 {
    let xs: Vec<f64> = (1..v.len()).map(|l| l as f64).collect();
    let ys: Vec<f64> = v[1..].iter().map(|x| x.log2()).collect();
    linear_fit(&xs, &ys).map_or(f64::NAN, |(slope, _)| -slope)
}

/// Log-log slopes of `|mean_diff|`, `V_l` and `C_l` against `2^l`, over
/// levels `l ≥ 1`, returned as positive rates `(α, β, γ)`.
pub fn fit_rates(stats: &[LevelStats]) -> Result<(f64, f64, f64)> {
    if stats.len() < 4 {
        return Err(Error::RateFit(format!("need at least 4 levels, got {}", stats.len())));
    }
    let diffs: Vec<&LevelStats> = stats.iter().filter(|s| s.level >= 1).collect();
    let xs: Vec<f64> = diffs.iter().map(|s| s.level as f64).collect();
    let fit = |ys: Vec<f64>| -> Result<f64> {
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::RateFit("zero or non-finite level statistic".into()));
        }
        Ok(linear_fit(&xs, &ys)?.0)
    };
    let alpha = -fit(diffs.iter().map(|s| s.mean_diff.abs().log2()).collect())?;
    let beta = -fit(diffs.iter().map(|s| s.var_diff.log2()).collect())?;
    let gamma = fit(diffs.iter().map(|s| s.cost.log2()).collect())?;
    Ok((alpha, beta, gamma))
}

/// CSV with columns `l, n_l, mean_diff, V_l, C_l, N_l`.
pub fn write_level_csv<W: Write>(mut w: W, stats: &[LevelStats]) -> std::io::Result<()> {
    writeln!(w, "l,n_l,mean_diff,V_l,C_l,N_l")?;
    for s in stats {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{}",
            s.level, s.n_steps, s.mean_diff, s.var_diff, s.cost, s.samples
        )?;
    }
    Ok(())
}

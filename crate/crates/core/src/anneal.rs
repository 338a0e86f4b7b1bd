//! Annealing schedule and the telescoping estimator of `Z = ∫ exp(-f)`.
//!
//! Stage `i` targets `ρ_i ∝ exp(-f(x) - ‖x‖²/(2σ_i²))` and
//! `Z_{i+1}/Z_i = E_{ρ_i}[g_i]` with `g_i = exp(½(σ_i⁻² - σ_{i+1}⁻²)‖x‖²)`,
//! `σ_{M+1} = ∞`. The first factor is approximated by `(2πσ_1²)^{d/2}`.
//! The target is assumed minimized at 0 with `f(0) = 0`; [`estimate_z`]
//! recentres it first.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::langevin::{run_to_end, ChainConfig, Independent, PhaseState, Scheme};
use crate::ledger::{LedgerSnapshot, Metered, QueryLedger};
use crate::mala::{transition, StepOptions};
use crate::mlmc::{mlmc_estimate, LangevinLevels};
use crate::oracle::{Potential, Shifted};
use crate::quadrature::GaussLegendre;
use crate::rng::{self, stream_id};
use crate::stats::norm_sq;

/// Variances `σ_1² < … < σ_M²` with the constants they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub sigma_sq: Vec<f64>,
    pub eps: f64,
    pub d: usize,
    pub l: f64,
    pub mu: f64,
    /// Per-stage growth `σ_{i+1}²/σ_i² - 1 = 1/√d`.
    pub alpha: f64,
}

impl Schedule {
    /// Number of stages `M`.
    pub fn stages(&self) -> usize {
        self.sigma_sq.len()
    }

    /// `σ_i⁻²` for `1 ≤ i ≤ M + 1`, with `σ_{M+1}⁻² = 0`.
    pub fn inv_sigma_sq(&self, i: usize) -> f64 {
        if i == self.stages() + 1 {
            0.0
        } else {
            1.0 / self.sigma_sq[i - 1]
        }
    }

    fn check_stage(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.stages() {
            Err(Error::invalid("stage", format!("{i} outside 1..={}", self.stages())))
        } else {
            Ok(())
        }
    }

    /// Stopping threshold `2√d/μ`.
    pub fn terminal_threshold(&self) -> f64 {
        2.0 * (self.d as f64).sqrt() / self.mu
    }
}

/// `σ_1² = ε/(2dL)`, ratio `1 + 1/√d`, stop at the first `σ² ≥ 2√d/μ`.
pub fn build_schedule(d: usize, l: f64, mu: f64, eps: f64) -> Result<Schedule> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", format!("must lie in (0, 1), got {eps}")));
    }
    if d == 0 || !(mu > 0.0 && l >= mu) {
        return Err(Error::invalid("L/mu", "need d >= 1 and L >= mu > 0"));
    }
    let alpha = 1.0 / (d as f64).sqrt();
    let ratio = 1.0 + alpha;
    let stop = 2.0 * (d as f64).sqrt() / mu;
    let mut sigma_sq = vec![eps / (2.0 * d as f64 * l)];
    while *sigma_sq.last().expect("nonempty") < stop {
        let next = sigma_sq.last().expect("nonempty") * ratio;
        sigma_sq.push(next);
    }
    Ok(Schedule { sigma_sq, eps, d, l, mu, alpha })
}

/// `g_i(x)` for `1 ≤ i ≤ M`.
pub fn g_ratio(s: &Schedule, i: usize, x: &[f64]) -> Result<f64> {
    s.check_stage(i)?;
    Ok(g_unchecked(s, i, norm_sq(x)))
}

fn g_unchecked(s: &Schedule, i: usize, r2: f64) -> f64 {
    (0.5 * (s.inv_sigma_sq(i) - s.inv_sigma_sq(i + 1)) * r2).exp()
}

/// Truncation radius `r⁺ = mean_norm + σ_i √((1 + α) log(1/ε))`, where
/// `mean_norm` estimates `E_{ρ_{i+1}}‖x‖`.
pub fn truncation_radius(s: &Schedule, i: usize, mean_norm: f64, eps: f64) -> f64 {
    mean_norm + s.sigma_sq[i - 1].sqrt() * ((1.0 + s.alpha) * (1.0 / eps).ln()).sqrt()
}

/// `E_{ρ_{i+1}}‖x‖` from draws of `ρ_i`, reweighted by `g_i`.
pub fn next_stage_mean_norm(s: &Schedule, i: usize, samples: &[Vec<f64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for x in samples {
        let r2 = norm_sq(x);
        let w = g_unchecked(s, i, r2);
        num += w * r2.sqrt();
        den += w;
    }
    num / den
}

/// `h_i(x) = min{g_i(x), exp((r⁺)²/(σ_i²(1 + 1/α)))}`.
pub fn truncated_g(s: &Schedule, i: usize, x: &[f64], r_plus: f64) -> Result<f64> {
    s.check_stage(i)?;
    let cap = (r_plus * r_plus / (s.sigma_sq[i - 1] * (1.0 + 1.0 / s.alpha))).exp();
    Ok(g_unchecked(s, i, norm_sq(x)).min(cap))
}

/// `E[v²]/E[v]²` of payoff values.
pub fn relative_variance_of(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: values.len() });
    }
    let n = values.len() as f64;
    let m1 = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| v * v).sum::<f64>() / n;
    Ok(m2 / (m1 * m1))
}

/// Empirical `E[g_i²]/E[g_i]²` over draws of `ρ_i` (at least 1000).
pub fn relative_variance(s: &Schedule, i: usize, samples: &[Vec<f64>]) -> Result<f64> {
    s.check_stage(i)?;
    if samples.len() < 1000 {
        return Err(Error::InsufficientSamples { needed: 1000, got: samples.len() });
    }
    if samples.iter().all(|x| x == &samples[0]) {
        return Err(Error::Degenerate("all samples identical".into()));
    }
    let g: Vec<f64> = samples.iter().map(|x| g_unchecked(s, i, norm_sq(x))).collect();
    relative_variance_of(&g)
}

/// Closed form of `E[g_i²]/E[g_i]²` when `f = ‖x‖²/2`, with `s² = σ_{i+1}²`
/// and `σ_i² = s²/(1 + α)`:
/// `[(1 + (1+α)/s²)(1 + (1-α)/s²)]^{-d/2} (1 + 1/s²)^d`.
pub fn gaussian_relative_variance(d: usize, alpha: f64, s_sq: f64) -> f64 {
    let d = d as f64;
    ((1.0 + (1.0 + alpha) / s_sq) * (1.0 + (1.0 - alpha) / s_sq)).powf(-d / 2.0) * (1.0 + 1.0 / s_sq).powf(d)
}

/// `E[g_i²]/E[g_i]²` for `f = ‖x‖²/2` at any stage, including the last:
/// `(1 + a')^d [(1 + a)(1 + 2a' - a)]^{-d/2}` with `a = σ_i⁻²`, `a' = σ_{i+1}⁻²`.
/// Infinite when the second moment diverges.
pub fn gaussian_stage_relative_variance(s: &Schedule, i: usize) -> Result<f64> {
    s.check_stage(i)?;
    let (a, b) = (s.inv_sigma_sq(i), s.inv_sigma_sq(i + 1));
    let tail = 1.0 + 2.0 * b - a;
    if tail <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let d = s.d as f64;
    Ok((1.0 + b).powf(d) * ((1.0 + a) * tail).powf(-d / 2.0))
}

/// `Z_1 = ∫ exp(-f(x) - ‖x‖²/(2σ_1²))` by composite Gauss–Legendre over
/// `±10σ_1` about the recentred minimizer, for `d ∈ {1, 2}`.
pub fn first_stage_partition<P: Potential + ?Sized>(p: &P, s: &Schedule, panels: usize) -> Result<f64> {
    check_dim(p.dim(), s.d)?;
    let centred = Shifted::centred(p);
    let a = s.inv_sigma_sq(1);
    let w = 10.0 * s.sigma_sq[0].sqrt();
    let rule = GaussLegendre::new(16);
    match s.d {
        1 => Ok(rule.composite(-w, w, panels, |x| (-centred.value(&[x]) - 0.5 * a * x * x).exp())),
        2 => Ok(rule.composite_2d(-w, w, panels, |x, y| (-centred.value(&[x, y]) - 0.5 * a * (x * x + y * y)).exp())),
        d => Err(Error::invalid("d", format!("quadrature supports d = 1 or 2, got {d}"))),
    }
}

/// Upper bound `exp(4α²d)` on the per-stage relative variance.
pub fn relative_variance_bound(s: &Schedule) -> f64 {
    (4.0 * s.alpha * s.alpha * s.d as f64).exp()
}

/// `f(x) + ‖x‖²/(2σ²)`.
pub struct StagePotential<'a, P: ?Sized> {
    pub base: &'a P,
    pub inv_sigma_sq: f64,
}

impl<P: Potential + ?Sized> Potential for StagePotential<'_, P> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + 0.5 * self.inv_sigma_sq * norm_sq(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.gradient_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.inv_sigma_sq * xi;
        }
    }
    fn smoothness(&self) -> f64 {
        self.base.smoothness() + self.inv_sigma_sq
    }
    fn convexity(&self) -> f64 {
        self.base.convexity() + self.inv_sigma_sq
    }
    fn minimizer(&self) -> Vec<f64> {
        self.base.minimizer()
    }
}

/// Moves a cloud of points towards `exp(-f)` for one stage potential.
pub trait StageSampler: Sync {
    fn name(&self) -> &'static str;

    /// Advances every point in place; point `k` uses stream `k` of `seed`.
    fn advance(&self, f: &dyn Potential, points: &mut [Vec<f64>], seed: u64) -> Result<()>;
}

/// `steps` HMC transitions per point with `η = eta_scale/√L_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MalaStage {
    pub steps: usize,
    pub eta_scale: f64,
}

impl StageSampler for MalaStage {
    fn name(&self) -> &'static str {
        "mala"
    }

    fn advance(&self, f: &dyn Potential, points: &mut [Vec<f64>], seed: u64) -> Result<()> {
        let eta = self.eta_scale / f.smoothness().sqrt();
        points.par_iter_mut().enumerate().for_each(|(k, x)| {
            let mut rng = rng::stream(seed, k as u64);
            for _ in 0..self.steps {
                *x = transition(f, x, eta, &mut rng, StepOptions::default()).x;
            }
        });
        Ok(())
    }
}

/// ULD or ULD-RMM from each point (velocity reset to 0) for `t_scale·κ_i`
/// time units with step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinStage {
    pub scheme: Scheme,
    pub h: f64,
    pub t_scale: f64,
}

impl StageSampler for LangevinStage {
    fn name(&self) -> &'static str {
        match self.scheme {
            Scheme::Uld => "uld",
            Scheme::UldRmm => "uld_rmm",
        }
    }

    fn advance(&self, f: &dyn Potential, points: &mut [Vec<f64>], seed: u64) -> Result<()> {
        let t_end = (self.t_scale * f.condition_number()).max(self.h);
        let cfg = ChainConfig::exact(self.scheme, self.h, t_end);
        points.par_iter_mut().enumerate().try_for_each(|(k, x)| {
            let mut inc = Independent::new(rng::stream(seed, 2 * k as u64));
            let end = run_to_end(
                f,
                PhaseState::at_rest(std::mem::take(x)),
                &cfg,
                &mut inc,
                rng::stream(seed, 2 * k as u64 + 1),
            )?;
            *x = end.x;
            Ok(())
        })
    }
}

/// Per-stage record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub stage: usize,
    pub sigma_sq: f64,
    pub mean_g: f64,
    pub rel_var: f64,
    pub oracle_calls: LedgerSnapshot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZEstimate {
    pub z_hat: f64,
    pub log_z_hat: f64,
    pub stages: Vec<StageDiagnostics>,
}

/// Optional truncation of the ratio payoffs at tolerance `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub eps: f64,
}

fn initial_points<P: Potential + ?Sized>(p: &P, schedule: &Schedule, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut init = rng::stream(seed, u64::MAX);
    let s1 = 1.0 / (p.smoothness() + schedule.inv_sigma_sq(1)).sqrt();
    (0..k).map(|_| (0..p.dim()).map(|_| s1 * init.sample::<f64, _>(StandardNormal)).collect()).collect()
}

/// Telescoping estimate of `∫ exp(-f)` with `k` points per stage.
///
/// Stage 1 starts from `N(0, L_1⁻¹ I)`; stage `i + 1` starts from the final
/// points of stage `i`.
pub fn estimate_z<P: Potential + ?Sized>(
    p: &P,
    schedule: &Schedule,
    sampler: &dyn StageSampler,
    k: usize,
    seed: u64,
    truncation: Option<Truncation>,
    ledger: Option<&QueryLedger>,
) -> Result<ZEstimate> {
    if k < 30 {
        return Err(Error::invalid("K", format!("need at least 30 points per stage, got {k}")));
    }
    check_dim(p.dim(), schedule.d)?;
    let centred = Shifted::centred(p);
    let d = p.dim();
    let m = schedule.stages();

    let mut points = initial_points(p, schedule, k, seed);
    let mut log_z = 0.5 * d as f64 * (2.0 * PI * schedule.sigma_sq[0]).ln();
    let mut stages = Vec::with_capacity(m);
    for i in 1..=m {
        let stage_ledger = QueryLedger::new();
        let stage_f = StagePotential { base: &centred, inv_sigma_sq: schedule.inv_sigma_sq(i) };
        let metered = Metered::new(&stage_f, &stage_ledger);
        sampler.advance(&metered, &mut points, stream_id(seed, i as u64))?;
        if points.iter().any(|x| x.iter().any(|c| !c.is_finite())) {
            return Err(Error::Divergence { stage: i });
        }
        let payoff: Vec<f64> = match truncation {
            None => points.iter().map(|x| g_unchecked(schedule, i, norm_sq(x))).collect(),
            Some(t) => {
                let r = truncation_radius(schedule, i, next_stage_mean_norm(schedule, i, &points), t.eps);
                points.iter().map(|x| truncated_g(schedule, i, x, r)).collect::<Result<_>>()?
            }
        };
        let mean_g = payoff.iter().sum::<f64>() / k as f64;
        log_z += mean_g.ln();
        let calls = stage_ledger.snapshot();
        if let Some(l) = ledger {
            l.record_evaluations(calls.evaluations);
            l.record_gradients(calls.gradients);
        }
        stages.push(StageDiagnostics {
            stage: i,
            sigma_sq: schedule.sigma_sq[i - 1],
            mean_g,
            rel_var: relative_variance_of(&payoff)?,
            oracle_calls: calls,
        });
    }
    let log_z = log_z - centred.offset;
    Ok(ZEstimate { z_hat: log_z.exp(), log_z_hat: log_z, stages })
}

/// Settings for [`estimate_z_mlmc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmcStage {
    pub scheme: Scheme,
    /// Horizon `T = t_scale·κ_i` of each multilevel path.
    pub t_scale: f64,
    /// Target root-mean-square error of each stage mean, relative to it.
    pub stage_rel_eps: f64,
    /// Step used to carry the warm-start pool to the next stage.
    pub pool_h: f64,
    /// Largest step allowed on the coarsest level.
    pub coarse_h: f64,
}

/// Telescoping estimate where each `E_{ρ_i} h_i` is a multilevel Langevin
/// estimate. Paths start from a pool of `k` warm-start points; the pool is
/// then advanced by one Langevin run to serve the next stage. Payoffs are
/// always truncated at tolerance `schedule.eps`.
pub fn estimate_z_mlmc<P: Potential + ?Sized>(
    p: &P,
    schedule: &Schedule,
    cfg: &MlmcStage,
    k: usize,
    seed: u64,
    ledger: Option<&QueryLedger>,
) -> Result<ZEstimate> {
    if k < 30 {
        return Err(Error::invalid("K", format!("need at least 30 points per stage, got {k}")));
    }
    if !(cfg.stage_rel_eps > 0.0 && cfg.t_scale > 0.0 && cfg.coarse_h > 0.0) {
        return Err(Error::invalid("mlmc stage", "t_scale, stage_rel_eps and coarse_h must be positive"));
    }
    check_dim(p.dim(), schedule.d)?;
    let centred = Shifted::centred(p);
    let mut points = initial_points(p, schedule, k, seed);
    let mut log_z = 0.5 * p.dim() as f64 * (2.0 * PI * schedule.sigma_sq[0]).ln();
    let pool_sampler = LangevinStage { scheme: cfg.scheme, h: cfg.pool_h, t_scale: cfg.t_scale };
    let mut stages = Vec::with_capacity(schedule.stages());
    for i in 1..=schedule.stages() {
        let stage_ledger = QueryLedger::new();
        let stage_f = StagePotential { base: &centred, inv_sigma_sq: schedule.inv_sigma_sq(i) };
        let metered = Metered::new(&stage_f, &stage_ledger);
        let r = truncation_radius(schedule, i, next_stage_mean_norm(schedule, i, &points), schedule.eps);
        let pool_payoff: Vec<f64> = points.iter().map(|x| truncated_g(schedule, i, x, r)).collect::<Result<_>>()?;
        let pilot = pool_payoff.iter().sum::<f64>() / k as f64;
        let payoff = |x: &[f64]| truncated_g(schedule, i, x, r).unwrap_or(f64::NAN);
        let t_end = cfg.t_scale * stage_f.condition_number();
        let base = (t_end / cfg.coarse_h).ceil() as u64;
        let levels =
            LangevinLevels::with_starts(&metered, payoff, points.clone(), t_end, cfg.scheme)?.with_base_steps(base);
        let eps_abs = (cfg.stage_rel_eps * pilot).min(0.3);
        let est = mlmc_estimate(&levels, eps_abs, stream_id(seed, i as u64))?;
        if !(est.estimate > 0.0) {
            return Err(Error::Divergence { stage: i });
        }
        log_z += est.estimate.ln();
        pool_sampler.advance(&metered, &mut points, stream_id(seed ^ 1, i as u64))?;
        if points.iter().any(|x| x.iter().any(|c| !c.is_finite())) {
            return Err(Error::Divergence { stage: i });
        }
        let calls = stage_ledger.snapshot();
        if let Some(l) = ledger {
            l.record_evaluations(calls.evaluations);
            l.record_gradients(calls.gradients);
        }
        stages.push(StageDiagnostics {
            stage: i,
            sigma_sq: schedule.sigma_sq[i - 1],
            mean_g: est.estimate,
            rel_var: relative_variance_of(&pool_payoff)?,
            oracle_calls: calls,
        });
    }
    let log_z = log_z - centred.offset;
    Ok(ZEstimate { z_hat: log_z.exp(), log_z_hat: log_z, stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_schedule_by_hand() {
        let s = build_schedule(1, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(s.sigma_sq, vec![0.25, 0.5, 1.0, 2.0]);
        let s = build_schedule(4, 1.0, 1.0, 0.5).unwrap();
        for w in s.sigma_sq.windows(2) {
            assert!((w[1] / w[0] - 1.5).abs() < 1e-15);
        }
        assert!(build_schedule(1, 1.0, 1.0, 1.0).is_err());
        assert!(build_schedule(1, 1.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn terminal_variance_brackets_threshold() {
        let s = build_schedule(100, 10.0, 1.0, 0.1).unwrap();
        let m = s.stages();
        assert!(s.sigma_sq[m - 1] >= 20.0 && s.sigma_sq[m - 2] < 20.0);
        let mut oracle = 1;
        while 0.1 / 2000.0 * 1.1f64.powi(oracle - 1) < 20.0 {
            oracle += 1;
        }
        assert_eq!(m as i32, oracle);
    }

    #[test]
    fn ratio_payoff_values() {
        let s = Schedule { sigma_sq: vec![1.0, 2.0], eps: 0.5, d: 1, l: 1.0, mu: 1.0, alpha: 1.0 };
        assert_eq!(g_ratio(&s, 1, &[0.0]).unwrap(), 1.0);
        assert!((g_ratio(&s, 1, &[1.0]).unwrap() - 0.25f64.exp()).abs() < 1e-15);
        assert!((g_ratio(&s, 2, &[1.0]).unwrap() - 0.25f64.exp()).abs() < 1e-15);
        assert!(g_ratio(&s, 3, &[1.0]).is_err());
        assert!(g_ratio(&s, 0, &[1.0]).is_err());
    }

    #[test]
    fn truncation_only_bites_outside_the_ball() {
        let s = build_schedule(2, 1.0, 1.0, 0.1).unwrap();
        let r = 1.5;
        let inside = [0.6, 0.8];
        assert_eq!(truncated_g(&s, 3, &inside, r).unwrap(), g_ratio(&s, 3, &inside).unwrap());
        let far = truncated_g(&s, 3, &[1e3, 0.0], r).unwrap();
        let farther = truncated_g(&s, 3, &[1e4, 0.0], r).unwrap();
        assert_eq!(far, farther);
        assert!(far < g_ratio(&s, 3, &[1e3, 0.0]).unwrap());
    }

    #[test]
    fn constant_payoff_has_unit_relative_variance() {
        assert!((relative_variance_of(&[2.5; 10]).unwrap() - 1.0).abs() < 1e-15);
        let s = build_schedule(1, 1.0, 1.0, 0.5).unwrap();
        assert!(relative_variance(&s, 1, &vec![vec![0.3]; 2000]).is_err());
    }
}

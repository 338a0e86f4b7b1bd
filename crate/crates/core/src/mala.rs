//! Metropolized HMC with a single leapfrog step per proposal (equivalently
//! MALA with step `η²/2`), its lazy variant and the random-length mixing
//! wrapper.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::oracle::Potential;

/// One leapfrog step. Two gradient calls.
pub fn leapfrog<P: Potential + ?Sized>(p: &P, x: &[f64], v: &[f64], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let g = p.gradient(x);
    let half: Vec<f64> = v.iter().zip(&g).map(|(vi, gi)| vi - 0.5 * eta * gi).collect();
    let xt: Vec<f64> = x.iter().zip(&half).map(|(xi, hi)| xi + eta * hi).collect();
    let gt = p.gradient(&xt);
    let vt = half.iter().zip(&gt).map(|(hi, gi)| hi - 0.5 * eta * gi).collect();
    (xt, vt)
}

/// `f(x) + ‖v‖²/2`. One evaluation call.
pub fn hamiltonian<P: Potential + ?Sized>(p: &P, x: &[f64], v: &[f64]) -> f64 {
    p.value(x) + 0.5 * v.iter().map(|c| c * c).sum::<f64>()
}

/// Knobs for a single transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Hold with probability ½ before proposing.
    pub lazy: bool,
    /// When false every proposal is accepted (diagnostic use only).
    pub metropolis: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { lazy: false, metropolis: true }
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: Vec<f64>,
    pub accepted: bool,
    /// `None` when the lazy coin held the chain without proposing.
    pub accept_prob: Option<f64>,
}

/// One HMC transition: fresh `v ~ N(0, I)`, leapfrog proposal and the
/// filter `min{1, exp(H(x, v) - H(x̃, ṽ))}`.
pub fn hmc_step<P, R>(p: &P, x: &[f64], eta: f64, rng: &mut R, lazy: bool) -> Result<(Vec<f64>, bool)>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    check_dim(p.dim(), x.len())?;
    check_eta(eta)?;
    let t = transition(p, x, eta, rng, StepOptions { lazy, metropolis: true });
    Ok((t.x, t.accepted))
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("eta", format!("must be positive, got {eta}")))
    }
}

/// Unchecked transition used by the chain drivers.
pub fn transition<P, R>(p: &P, x: &[f64], eta: f64, rng: &mut R, opts: StepOptions) -> Transition
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    if opts.lazy && rng.random::<bool>() {
        return Transition { x: x.to_vec(), accepted: false, accept_prob: None };
    }
    let v: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let (xt, vt) = leapfrog(p, x, &v, eta);
    let log_ratio = hamiltonian(p, x, &v) - hamiltonian(p, &xt, &vt);
    let prob = if opts.metropolis { log_ratio.exp().min(1.0) } else { 1.0 };
    let prob = if prob.is_nan() { 0.0 } else { prob };
    let u: f64 = rng.random();
    if u < prob {
        Transition { x: xt, accepted: true, accept_prob: Some(prob) }
    } else {
        Transition { x: x.to_vec(), accepted: false, accept_prob: Some(prob) }
    }
}

/// Initial law of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartLaw {
    Point(Vec<f64>),
    /// `N(x*, L^{-1} I)`.
    GaussianLinv,
}

impl StartLaw {
    pub fn draw<P: Potential + ?Sized, R: Rng + ?Sized>(&self, p: &P, rng: &mut R) -> Vec<f64> {
        match self {
            StartLaw::Point(x) => x.clone(),
            StartLaw::GaussianLinv => {
                let s = 1.0 / p.smoothness().sqrt();
                p.minimizer().into_iter().map(|m| m + s * rng.sample::<f64, _>(StandardNormal)).collect()
            }
        }
    }
}

/// Step size `η = sqrt(2h)` with `h = c0 / (L d log²(max{κ, d, β/ε, c2}))`.
pub fn warm_start_eta(l: f64, kappa: f64, d: usize, beta: f64, eps: f64, c0: f64, c2: f64) -> f64 {
    let arg = kappa.max(d as f64).max(beta / eps).max(c2);
    let h = c0 / (l * d as f64 * arg.ln().powi(2));
    (2.0 * h).sqrt()
}

/// Random-length restart wrapper: each output point starts from the start
/// law and runs `rounds` blocks of `j ~ U{0, …, J}` HMC steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingWrapper {
    pub max_len: u64,
    pub rounds: u32,
}

impl MixingWrapper {
    /// `J = ⌈κ d log(κ/ε) log(d log(κ/ε))⌉` and `⌈log(1/ε)⌉` rounds, unit constants.
    /// Both logarithms are floored at 1 so tiny problems keep `J ≥ 1`.
    pub fn for_target(kappa: f64, d: usize, eps: f64) -> Self {
        let inner = (kappa / eps).ln().max(1.0);
        let outer = (d as f64 * inner).ln().max(1.0);
        Self {
            max_len: (kappa * d as f64 * inner * outer).ceil() as u64,
            rounds: (1.0 / eps).ln().ceil().max(1.0) as u32,
        }
    }
}

/// Output of [`run_mala`].
#[derive(Debug, Clone)]
pub struct MalaRun {
    pub samples: Vec<Vec<f64>>,
    pub proposals: u64,
    pub accepted: u64,
}

impl MalaRun {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Plain chain (`wrapper = None`): returns the `n + 1` visited points.
/// Wrapped: returns `n` independent restarts.
pub fn run_mala<P, R>(
    p: &P,
    start: &StartLaw,
    eta: f64,
    n: usize,
    rng: &mut R,
    opts: StepOptions,
    wrapper: Option<MixingWrapper>,
) -> Result<MalaRun>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    check_eta(eta)?;
    if let StartLaw::Point(x) = start {
        check_dim(p.dim(), x.len())?;
    }
    let mut run = MalaRun { samples: Vec::with_capacity(n + 1), proposals: 0, accepted: 0 };
    let advance = |x: Vec<f64>, steps: u64, rng: &mut R, run: &mut MalaRun| {
        let mut x = x;
        for _ in 0..steps {
            let t = transition(p, &x, eta, rng, opts);
            if t.accept_prob.is_some() {
                run.proposals += 1;
            }
            run.accepted += u64::from(t.accepted);
            x = t.x;
        }
        x
    };
    match wrapper {
        None => {
            let mut x = start.draw(p, rng);
            run.samples.push(x.clone());
            for _ in 0..n {
                x = advance(x, 1, rng, &mut run);
                run.samples.push(x.clone());
            }
        }
        Some(w) => {
            for _ in 0..n {
                let mut x = start.draw(p, rng);
                for _ in 0..w.rounds {
                    let j = rng.random_range(0..=w.max_len);
                    x = advance(x, j, rng, &mut run);
                }
                run.samples.push(x);
            }
        }
    }
    Ok(run)
}

/// `max_i ρ0_i / ρ_i` on a common grid; `+∞` if `ρ0` charges an atom where
/// `ρ` vanishes.
pub fn warmness(rho0: &[f64], rho: &[f64]) -> Result<f64> {
    check_dim(rho.len(), rho0.len())?;
    let mut beta = 0.0f64;
    for (&a, &b) in rho0.iter().zip(rho) {
        if a < 0.0 || b < 0.0 {
            return Err(Error::invalid("weights", "must be nonnegative"));
        }
        if b == 0.0 {
            if a > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        beta = beta.max(a / b);
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Metered, QueryLedger};
    use crate::oracle::FunctionInstance;
    use crate::rng;

    struct Flat;
    impl Potential for Flat {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, _x: &[f64]) -> f64 {
            3.0
        }
        fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0)
        }
        fn smoothness(&self) -> f64 {
            1.0
        }
        fn convexity(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn free_flight() {
        let (x, v) = leapfrog(&Flat, &[1.0, 2.0], &[0.5, -1.0], 0.2);
        assert_eq!(x, vec![1.1, 1.8]);
        assert_eq!(v, vec![0.5, -1.0]);
        let mut r = rng::stream(0, 0);
        for _ in 0..100 {
            assert!(hmc_step(&Flat, &[0.0, 0.0], 0.3, &mut r, false).unwrap().1);
        }
    }

    #[test]
    fn quadratic_hand_values() {
        let g = FunctionInstance::gaussian(1);
        let (x, v) = leapfrog(&g, &[1.0], &[0.0], 0.1);
        assert!((x[0] - 0.995).abs() < 1e-15);
        assert!((v[0] - (-0.05 - 0.05 * 0.995)).abs() < 1e-15);
        assert_eq!(hamiltonian(&FunctionInstance::gaussian(2), &[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn counts_two_gradients_and_two_evaluations_per_proposal() {
        let g = FunctionInstance::gaussian(3);
        let ledger = QueryLedger::new();
        let m = Metered::new(&g, &ledger);
        let mut r = rng::stream(1, 0);
        for _ in 0..10 {
            hmc_step(&m, &[0.1, 0.2, 0.3], 0.2, &mut r, false).unwrap();
        }
        let s = ledger.snapshot();
        assert_eq!((s.gradients, s.evaluations), (20, 20));
    }

    #[test]
    fn warmness_examples() {
        let rho = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(warmness(&rho, &rho).unwrap(), 1.0);
        assert!((warmness(&[0.25; 4], &rho).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(warmness(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_steps_returns_start() {
        let g = FunctionInstance::gaussian(2);
        let run = run_mala(
            &g,
            &StartLaw::Point(vec![1.0, 2.0]),
            0.1,
            0,
            &mut rng::stream(0, 0),
            StepOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(run.samples, vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn wrapper_defaults() {
        let w = MixingWrapper::for_target(1.0, 1, 0.05);
        assert_eq!(w.rounds, 3);
        assert!(w.max_len >= 1);
    }
}

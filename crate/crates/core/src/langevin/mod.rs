//! Underdamped Langevin dynamics.
//!
//! `dv = -2v dt - (1/L)∇f(x) dt + (2/√L) dB`, `dx = v dt`, whose stationary
//! law is `∝ exp(-f(x) - L‖v‖²/2)`.

mod brownian;
mod chain;
mod covariance;
mod integrator;

pub use brownian::{increment_covariance, BrownianPath, IncrementSource, Independent, ZeroNoise};
pub use chain::{
    final_states, n_steps, run_chain, run_to_end, strong_errors, w2_gaussian, write_trajectory_csv, ChainConfig,
};
pub use covariance::{uld_covariance, uld_rmm_covariance, IncrementCovariance};
pub use integrator::Integrator;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::oracle::noise::perturb;
use crate::oracle::{NoiseConfig, Potential};
use crate::rng::StreamRng;

/// Position and velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    /// Starts at `x` with zero velocity.
    pub fn at_rest(x: Vec<f64>) -> Self {
        let v = vec![0.0; x.len()];
        Self { x, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Uld,
    UldRmm,
}

impl Scheme {
    pub fn gradients_per_step(self) -> u64 {
        match self {
            Scheme::Uld => 1,
            Scheme::UldRmm => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    Exact,
    Noisy(NoiseConfig),
}

/// Exact or noise-injected gradients with the noise on its own stream.
pub struct GradientOracle<'a, P: ?Sized> {
    potential: &'a P,
    noise: Option<(NoiseConfig, StreamRng)>,
}

impl<'a, P: Potential + ?Sized> GradientOracle<'a, P> {
    pub fn exact(potential: &'a P) -> Self {
        Self { potential, noise: None }
    }

    pub fn new(potential: &'a P, mode: &GradMode, noise_rng: StreamRng) -> Self {
        match mode {
            GradMode::Exact => Self::exact(potential),
            GradMode::Noisy(cfg) => Self { potential, noise: Some((*cfg, noise_rng)) },
        }
    }

    pub fn smoothness(&self) -> f64 {
        self.potential.smoothness()
    }

    pub fn potential(&self) -> &'a P {
        self.potential
    }

    pub fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        self.potential.gradient_into(x, out);
        if let Some((cfg, rng)) = &mut self.noise {
            perturb(out, cfg, rng);
        }
    }
}

/// One ULD step with fresh independent increments.
pub fn uld_step<P, R>(grad: &mut GradientOracle<'_, P>, state: &PhaseState, h: f64, rng: &mut R) -> Result<PhaseState>
where
    P: Potential + ?Sized,
    R: Rng,
{
    step_with(Scheme::Uld, grad, state, h, &mut Independent::new(rng))
}

/// One randomized-midpoint step with fresh independent increments.
pub fn uld_rmm_step<P, R>(
    grad: &mut GradientOracle<'_, P>,
    state: &PhaseState,
    h: f64,
    rng: &mut R,
) -> Result<PhaseState>
where
    P: Potential + ?Sized,
    R: Rng,
{
    step_with(Scheme::UldRmm, grad, state, h, &mut Independent::new(rng))
}

/// One step of `scheme` from time 0 using `inc` for the noise.
pub fn step_with<P, I>(
    scheme: Scheme,
    grad: &mut GradientOracle<'_, P>,
    state: &PhaseState,
    h: f64,
    inc: &mut I,
) -> Result<PhaseState>
where
    P: Potential + ?Sized,
    I: IncrementSource + ?Sized,
{
    let d = grad.potential().dim();
    check_dim(d, state.x.len())?;
    check_dim(d, state.v.len())?;
    uld_covariance(h)?;
    let mut next = state.clone();
    Integrator::new(d).step(scheme, grad, &mut next, 0.0, h, inc);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FunctionInstance;

    /// `f ≡ 0` with nominal constants, for free-flow checks.
    struct Flat(usize);
    impl Potential for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _x: &[f64]) -> f64 {
            0.0
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
    fn free_flow_is_ou_contraction() {
        let f = Flat(2);
        let s = PhaseState { x: vec![1.0, -2.0], v: vec![0.5, 3.0] };
        let h: f64 = 0.3;
        let e = (-2.0 * h).exp();
        for scheme in [Scheme::Uld, Scheme::UldRmm] {
            let mut g = GradientOracle::exact(&f);
            let n = step_with(scheme, &mut g, &s, h, &mut ZeroNoise { alpha: 0.4 }).unwrap();
            for i in 0..2 {
                assert!((n.v[i] - e * s.v[i]).abs() < 1e-15);
                assert!((n.x[i] - (s.x[i] + 0.5 * (1.0 - e) * s.v[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pinned_zero_midpoint_evaluates_at_x() {
        let inst = FunctionInstance::gaussian(2);
        let s = PhaseState { x: vec![0.7, -0.1], v: vec![1.0, 2.0] };
        let mut integ = Integrator::new(2);
        let mut g = GradientOracle::exact(&inst);
        let mut st = s.clone();
        integ.step(Scheme::UldRmm, &mut g, &mut st, 0.0, 0.2, &mut ZeroNoise { alpha: 0.0 });
        assert_eq!(integ.last_midpoint(), &s.x[..]);
    }

    #[test]
    fn steps_do_not_compose() {
        let inst = FunctionInstance::gaussian(1);
        let s = PhaseState { x: vec![1.0], v: vec![0.0] };
        let mut g = GradientOracle::exact(&inst);
        let one = step_with(Scheme::Uld, &mut g, &s, 0.1, &mut ZeroNoise { alpha: 0.5 }).unwrap();
        let half = step_with(Scheme::Uld, &mut g, &s, 0.05, &mut ZeroNoise { alpha: 0.5 }).unwrap();
        let two = step_with(Scheme::Uld, &mut g, &half, 0.05, &mut ZeroNoise { alpha: 0.5 }).unwrap();
        assert!(one.is_finite() && two.is_finite());
        assert_ne!(one, two);
    }

    #[test]
    fn rejects_bad_inputs() {
        let inst = FunctionInstance::gaussian(2);
        let mut g = GradientOracle::exact(&inst);
        let s = PhaseState::at_rest(vec![0.0]);
        assert!(uld_step(&mut g, &s, 0.1, &mut crate::rng::stream(0, 0)).is_err());
        let s = PhaseState::at_rest(vec![0.0, 0.0]);
        assert!(uld_step(&mut g, &s, 0.0, &mut crate::rng::stream(0, 0)).is_err());
    }
}

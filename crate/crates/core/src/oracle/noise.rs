use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Potential;
use crate::error::{check_dim, Error, Result};

/// Truncation point of the per-coordinate noise, in standard deviations.
const TRUNCATION: f64 = 3.0;

/// Error model for an inexact gradient oracle built from noisy evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Evaluation-oracle error.
    pub eps_eval: f64,
    /// Admissible ℓ1 bias, `3000 d^1.5 sqrt(eps_eval L)`.
    pub bias_bound: f64,
    /// Per-coordinate clipping level.
    pub clip_level: f64,
    /// Total variance budget over all coordinates.
    pub sigma_sq: f64,
    /// Fraction of `bias_bound` injected as a deterministic bias vector.
    #[serde(default)]
    pub bias_fraction: f64,
}

impl NoiseConfig {
    pub fn new(d: usize, smoothness: f64, eps_eval: f64, clip_level: f64, sigma_sq: f64) -> Result<Self> {
        let cfg = Self {
            eps_eval,
            bias_bound: 3000.0 * (d as f64).powf(1.5) * (eps_eval * smoothness).sqrt(),
            clip_level,
            sigma_sq,
            bias_fraction: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// No noise, no bias, no effective clipping.
    pub fn exact() -> Self {
        Self { eps_eval: 0.0, bias_bound: 0.0, clip_level: f64::INFINITY, sigma_sq: 0.0, bias_fraction: 0.0 }
    }

    pub fn with_bias_fraction(mut self, fraction: f64) -> Self {
        self.bias_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_eval >= 0.0 && self.sigma_sq >= 0.0 && self.bias_bound >= 0.0) {
            return Err(Error::invalid("noise", "eps_eval, sigma_sq and bias_bound must be >= 0"));
        }
        if !(self.clip_level > 0.0) {
            return Err(Error::invalid("clip_level", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.bias_fraction) {
            return Err(Error::invalid("bias_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Per-coordinate bias magnitude.
    fn bias_per_coordinate(&self, d: usize) -> f64 {
        self.bias_fraction * self.bias_bound / d as f64
    }
}

/// One draw of the inexact gradient.
///
/// Each coordinate gets independent Gaussian noise of variance `sigma_sq/d`
/// truncated at three standard deviations, plus a bias of alternating sign,
/// then is clipped to `[-L0, L0]`. With no noise and no bias the exact
/// gradient is returned bit for bit.
pub fn noisy_gradient<P, R>(p: &P, x: &[f64], cfg: &NoiseConfig, rng: &mut R) -> Result<Vec<f64>>
where
    P: Potential + ?Sized,
    R: Rng + ?Sized,
{
    check_dim(p.dim(), x.len())?;
    let mut g = p.gradient(x);
    perturb(&mut g, cfg, rng);
    Ok(g)
}

/// In-place variant used by the integrators.
pub(crate) fn perturb<R: Rng + ?Sized>(g: &mut [f64], cfg: &NoiseConfig, rng: &mut R) {
    let d = g.len();
    if cfg.sigma_sq > 0.0 {
        let sd = (cfg.sigma_sq / d as f64).sqrt();
        for gi in g.iter_mut() {
            *gi += sd * truncated_standard_normal(rng);
        }
    }
    let b = cfg.bias_per_coordinate(d);
    if b > 0.0 {
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += if i % 2 == 0 { b } else { -b };
        }
    }
    let c = cfg.clip_level;
    for gi in g.iter_mut() {
        if *gi > c {
            *gi = c;
        } else if *gi < -c {
            *gi = -c;
        }
    }
}

fn truncated_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATION {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FunctionInstance;
    use crate::rng;

    #[test]
    fn zero_noise_is_bit_identical() {
        let inst = FunctionInstance::diagonal(vec![1.0, 7.3]).unwrap();
        let cfg = NoiseConfig::new(2, 7.3, 0.0, 1e6, 0.0).unwrap();
        let mut r = rng::stream(1, 0);
        let x = [0.123456789, -9.87654321];
        assert_eq!(noisy_gradient(&inst, &x, &cfg, &mut r).unwrap(), inst.gradient(&x));
    }

    #[test]
    fn clipping_bounds_every_coordinate() {
        let inst = FunctionInstance::gaussian(2);
        let cfg = NoiseConfig::new(2, 1.0, 0.0, 1.0, 0.5).unwrap();
        let mut r = rng::stream(2, 0);
        for _ in 0..1000 {
            let g = noisy_gradient(&inst, &[5.0, 0.0], &cfg, &mut r).unwrap();
            assert!(g.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn empirical_mean_is_close_to_gradient() {
        let inst = FunctionInstance::gaussian(2);
        let cfg = NoiseConfig::new(2, 1.0, 0.0, 100.0, 0.01).unwrap();
        let mut r = rng::stream(3, 0);
        let x = [0.5, -0.25];
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let g = noisy_gradient(&inst, &x, &cfg, &mut r).unwrap();
            acc[0] += g[0];
            acc[1] += g[1];
        }
        let l1 = (acc[0] / n as f64 - x[0]).abs() + (acc[1] / n as f64 - x[1]).abs();
        assert!(l1 <= 0.01, "l1 = {l1}");
    }

    #[test]
    fn bias_bound_formula() {
        let cfg = NoiseConfig::new(4, 2.0, 1e-8, 10.0, 0.0).unwrap();
        assert!((cfg.bias_bound - 3000.0 * 8.0 * (2e-8f64).sqrt()).abs() < 1e-12);
    }
}

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use super::chain::{DiscreteChain, GridConfig};
use super::mixing::mixing_time;
use super::spectrum::discriminant_eigen;
use crate::anneal::Schedule;
use crate::error::{Error, Result};
use crate::mala::warmness;
use crate::oracle::Potential;
use crate::stats::norm_sq;

const UNIT_TOL: f64 = 1e-12;

/// `Σ_x sqrt(a_x b_x)`.
pub fn bhattacharyya(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum())
}

/// Overlap of centred 1D normals with variances `a` and `b`.
pub fn gaussian_bhattacharyya(a: f64, b: f64) -> f64 {
    (2.0 * (a * b).sqrt() / (a + b)).sqrt()
}

/// Unnormalized `−log π_i(x)`: stage 0 is `N(0, σ_1² I)`, stages `1..=M`
/// add `‖x‖²/(2σ_i²)` to `f`, and stage `M + 1` is `f` itself.
pub fn stage_log_density<P: Potential + ?Sized>(p: &P, s: &Schedule, i: usize, x: &[f64]) -> Result<f64> {
    if i > s.stages() + 1 {
        return Err(Error::invalid("stage", format!("{i} outside 0..={}", s.stages() + 1)));
    }
    let r2 = norm_sq(x);
    Ok(if i == 0 { 0.5 * r2 / s.sigma_sq[0] } else { p.value(x) + 0.5 * s.inv_sigma_sq(i) * r2 })
}

fn grid_density<P: Potential + ?Sized>(p: &P, s: &Schedule, i: usize, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let logs: Vec<f64> = pts.iter().map(|x| stage_log_density(p, s, i, x)).collect::<Result<_>>()?;
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = logs.iter().map(|v| (lo - v).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Overlap `⟨π_i|π_{i+1}⟩` of consecutive qsample states on a grid
/// centred at the minimizer, wide enough for 6 standard deviations of
/// the broader stage.
pub fn qsample_overlap<P: Potential + ?Sized>(p: &P, s: &Schedule, i: usize, points_per_axis: usize) -> Result<f64> {
    if i > s.stages() {
        return Err(Error::invalid("stage", format!("{i} has no successor")));
    }
    let wide_precision = p.convexity() + s.inv_sigma_sq(i + 1);
    let grid = GridConfig::centred(&p.minimizer(), 6.0 / wide_precision.sqrt(), points_per_axis);
    grid.validate()?;
    let pts = grid.points();
    bhattacharyya(&grid_density(p, s, i, &pts)?, &grid_density(p, s, i + 1, &pts)?)
}

/// Overlaps for every consecutive pair `0 ≤ i ≤ M`.
pub fn schedule_overlaps<P: Potential + ?Sized>(p: &P, s: &Schedule, points_per_axis: usize) -> Result<Vec<f64>> {
    (0..=s.stages()).map(|i| qsample_overlap(p, s, i, points_per_axis)).collect()
}

/// One nonreal eigenpair of the walk and its overlap with the lifted start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeOverlap {
    pub lambda: f64,
    pub overlap: f64,
}

/// Start-state overlaps with every nonreal walk eigenvector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapProfile {
    /// Indexed like the decreasing eigenvalues of `D`; `±1` eigenvalues
    /// get overlap 0.
    pub modes: Vec<ModeOverlap>,
    pub beta: f64,
    pub t_mix: u64,
    pub eps: f64,
}

impl GapProfile {
    /// Largest overlap among `1 > λ ≥ 1 − window/t_mix`.
    pub fn slow_max(&self, window: f64) -> f64 {
        let cut = 1.0 - window / self.t_mix.max(1) as f64;
        self.modes
            .iter()
            .filter(|m| m.lambda < 1.0 - UNIT_TOL && m.lambda >= cut)
            .map(|m| m.overlap)
            .fold(0.0, f64::max)
    }

    /// Whether every slow overlap is at most `c·β·√ε`.
    pub fn within_bound(&self, c: f64, window: f64) -> bool {
        self.slow_max(window) <= c * self.beta * self.eps.sqrt()
    }
}

/// Overlaps `|⟨φ_ρ0|u⟩|` between the lifted start `φ_ρ0 = Σ_x √ρ0(x) T|x⟩`
/// and the walk eigenvectors `u ∝ T|λ⟩ − e^{iθ} S T|λ⟩`, built explicitly
/// in `C^{N²}`. Both members of a conjugate pair share one magnitude.
pub fn effective_gap_profile(chain: &DiscreteChain, rho0: &[f64], eps: f64) -> Result<GapProfile> {
    let n = chain.len();
    if rho0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rho0.len() });
    }
    let beta = warmness(rho0, &chain.pi)?;
    let t_mix = mixing_time(chain, eps, 48)?;
    let (vals, vecs) = discriminant_eigen(chain);
    let sqrt_p = chain.p.map(f64::sqrt);
    let lift = |v: &[f64]| -> DVector<f64> { DVector::from_fn(n * n, |r, _| v[r / n] * sqrt_p[(r / n, r % n)]) };
    let swap = |v: &DVector<f64>| -> DVector<f64> { DVector::from_fn(n * n, |r, _| v[(r % n) * n + r / n]) };
    let root: Vec<f64> = rho0.iter().map(|r| r.sqrt()).collect();
    let phi = lift(&root);
    let modes = vals
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            if lambda.abs() >= 1.0 - UNIT_TOL {
                return ModeOverlap { lambda, overlap: 0.0 };
            }
            let v: Vec<f64> = vecs.column(k).iter().copied().collect();
            let a = lift(&v);
            let b = swap(&a);
            let mu = Complex::new(lambda, (1.0 - lambda * lambda).sqrt());
            let (pa, pb) = (phi.dot(&a), phi.dot(&b));
            let amp = Complex::new(pa, 0.0) - mu * pb;
            let norm = (2.0 * (1.0 - lambda * lambda)).sqrt();
            ModeOverlap { lambda, overlap: amp.norm() / norm }
        })
        .collect();
    Ok(GapProfile { modes, beta, t_mix, eps })
}

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Potential;
use crate::error::{check_dim, Error, Result};

/// Points beyond which grids are replaced by a fixed pseudo-random subset.
const MAX_POINTS: usize = 2000;

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn cube(d: usize, half_side: f64) -> Self {
        Self { lo: vec![-half_side; d], hi: vec![half_side; d] }
    }

    fn points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        let total = (per_axis as f64).powi(d as i32);
        if total <= MAX_POINTS as f64 {
            (0..per_axis.pow(d as u32))
                .map(|mut idx| {
                    (0..d)
                        .map(|j| {
                            let i = idx % per_axis;
                            idx /= per_axis;
                            self.lo[j] + (self.hi[j] - self.lo[j]) * i as f64 / (per_axis - 1) as f64
                        })
                        .collect()
                })
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            (0..MAX_POINTS).map(|_| (0..d).map(|j| rng.random_range(self.lo[j]..=self.hi[j])).collect()).collect()
        }
    }
}

/// Min and max of `(f(y) - f(x) - ⟨∇f(x), y - x⟩) / (‖y - x‖²/2)` over all
/// ordered pairs of grid points in `region`.
pub fn verify_conditioning<P: Potential + ?Sized>(p: &P, region: &Region, grid_points: usize) -> Result<(f64, f64)> {
    check_dim(p.dim(), region.lo.len())?;
    check_dim(p.dim(), region.hi.len())?;
    if grid_points < 2 {
        return Err(Error::invalid("grid_points", "need at least 2 per axis"));
    }
    let pts = region.points(grid_points);
    let vals: Vec<f64> = pts.iter().map(|x| p.value(x)).collect();
    let grads: Vec<Vec<f64>> = pts.iter().map(|x| p.gradient(x)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((yj, xi), gi) in pts[j].iter().zip(&pts[i]).zip(&grads[i]) {
                lin += gi * (yj - xi);
                sq += (yj - xi).powi(2);
            }
            let q = (vals[j] - vals[i] - lin) / (0.5 * sq);
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    Ok((lo, hi))
}

/// Central-difference Hessian from the analytic gradient, symmetrized.
pub fn numerical_hessian<P: Potential + ?Sized>(p: &P, x: &[f64], step: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + step;
        let gp = p.gradient(&xp);
        xp[j] = x[j] - step;
        let gm = p.gradient(&xp);
        xp[j] = x[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Smallest and largest numerical Hessian eigenvalue over a grid.
pub fn hessian_extremes<P: Potential + ?Sized>(p: &P, region: &Region, grid_points: usize) -> Result<(f64, f64)> {
    check_dim(p.dim(), region.lo.len())?;
    if grid_points < 2 {
        return Err(Error::invalid("grid_points", "need at least 2 per axis"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in region.points(grid_points) {
        let eig = SymmetricEigen::new(numerical_hessian(p, &x, 1e-5)).eigenvalues;
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FunctionInstance, HardInstance, TypeChoice};
    use crate::rng;

    #[test]
    fn quadratics_are_certified_exactly() {
        let g = FunctionInstance::gaussian(2);
        let (mu, l) = verify_conditioning(&g, &Region::cube(2, 3.0), 7).unwrap();
        assert!((mu - 1.0).abs() < 1e-9 && (l - 1.0).abs() < 1e-9);
        let q = FunctionInstance::diagonal(vec![1.0, 10.0]).unwrap();
        let (mu, l) = verify_conditioning(&q, &Region::cube(2, 3.0), 7).unwrap();
        assert!((mu - 1.0).abs() < 1e-9 && (l - 10.0).abs() < 1e-9);
    }

    #[test]
    fn hard_instance_stays_in_band() {
        let h = HardInstance::generate(1, 16, 0.25, TypeChoice::MajorityType2, &mut rng::stream(4, 0)).unwrap();
        let inst = FunctionInstance::Hard(h);
        let (mu, l) = verify_conditioning(&inst, &Region::cube(1, 1.5), 301).unwrap();
        assert!(mu >= 0.5 && l <= 1.5, "({mu}, {l})");
        let (lo, hi) = hessian_extremes(&inst, &Region::cube(1, 1.5), 2001).unwrap();
        assert!(lo >= 0.5 && hi <= 1.5, "({lo}, {hi})");
    }
}

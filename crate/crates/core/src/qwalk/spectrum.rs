use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::chain::DiscreteChain;
use super::overlap::GapProfile;
use crate::error::{Error, Result};

/// Largest state count for which the full `N² × N²` walk is diagonalized.
pub const DENSE_LIMIT: usize = 32;

const UNIT_TOL: f64 = 1e-12;
const PHASE_TOL: f64 = 1e-9;

/// `D_xy = sqrt(P_xy P_yx)`.
pub fn discriminant(chain: &DiscreteChain) -> DMatrix<f64> {
    let p = &chain.p;
    DMatrix::from_fn(p.nrows(), p.ncols(), |x, y| (p[(x, y)] * p[(y, x)]).sqrt())
}

/// Eigen-decomposition of `D` sorted by decreasing eigenvalue.
pub(crate) fn discriminant_eigen(chain: &DiscreteChain) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(discriminant(chain));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i].clamp(-1.0, 1.0)).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// `W = S(2Π − I)` on `C^N ⊗ C^N`, with `Π = TTᵀ` and `T|x⟩ = |x⟩ ⊗ Σ_y √P_xy |y⟩`.
pub fn walk_operator(chain: &DiscreteChain) -> DMatrix<f64> {
    let n = chain.len();
    let t = DMatrix::from_fn(n * n, n, |r, c| if r / n == c { chain.p[(c, r % n)].sqrt() } else { 0.0 });
    let mut refl = &t * t.transpose() * 2.0;
    for i in 0..n * n {
        refl[(i, i)] -= 1.0;
    }
    // Row (x, y) of S·R is row (y, x) of R.
    DMatrix::from_fn(n * n, n * n, |r, c| refl[((r % n) * n + r / n, c)])
}

/// Discriminant eigenvalues and walk eigenphases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkSpectrum {
    /// Eigenvalues of `D`, decreasing.
    pub disc_eigs: Vec<f64>,
    /// All `N²` eigenphases of `W` in `(−π, π]`: for each `λ` in order,
    /// `0`, `±arccos λ` or `π`, then the `+1` and `−1` eigenspaces outside
    /// the span of `T` and `ST`.
    pub phases: Vec<f64>,
    pub delta: f64,
    /// Smallest nonzero `|phase|`; `π` when every phase is `0` or `π`.
    pub phase_gap: f64,
    /// Max distance between predicted and directly computed eigenvalues of
    /// `W`, when `N ≤ DENSE_LIMIT`.
    pub dense_residual: Option<f64>,
}

/// Walk spectrum from the eigenvalues of `D`. For small chains the
/// prediction is checked against a dense eigensolve of `W`.
pub fn walk_spectrum(chain: &DiscreteChain) -> Result<WalkSpectrum> {
    let (disc_eigs, _) = discriminant_eigen(chain);
    let n = chain.len();
    let (mut generic, mut plus, mut minus) = (0usize, 0usize, 0usize);
    let mut phases = Vec::with_capacity(n * n);
    for &l in &disc_eigs {
        if l >= 1.0 - UNIT_TOL {
            plus += 1;
            phases.push(0.0);
        } else if l <= -1.0 + UNIT_TOL {
            minus += 1;
            phases.push(PI);
        } else {
            generic += 1;
            let th = l.acos();
            phases.extend([th, -th]);
        }
    }
    // Outside the 2N-dimensional span, W acts as −S.
    let sym = n * (n + 1) / 2 - generic - plus;
    let anti = n * (n - 1) / 2 - generic - minus;
    phases.extend(std::iter::repeat_n(0.0, anti));
    phases.extend(std::iter::repeat_n(PI, sym));

    let delta = 1.0 - disc_eigs.get(1).copied().unwrap_or(-1.0);
    let phase_gap = phases.iter().map(|p| p.abs()).filter(|&p| p > PHASE_TOL).fold(PI, f64::min);
    let dense_residual = if n <= DENSE_LIMIT { Some(dense_residual(chain, &phases)?) } else { None };
    Ok(WalkSpectrum { disc_eigs, phases, delta, phase_gap, dense_residual })
}

fn canonical_phase(z: Complex<f64>) -> f64 {
    let a = z.arg();
    if a <= -PI + PHASE_TOL {
        PI
    } else {
        a
    }
}

/// Eigenvalues of the real orthogonal `W`. Since `W` is normal, its
/// symmetric part `S` and `H = (W − Wᵀ)/2i` commute and share its
/// eigenvectors; a Hermitian solve of `S + tH` for generic `t` separates
/// them, and `u*Wu` then recovers each eigenvalue.
fn walk_eigenvalues(w: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let m = w.nrows();
    let t = 0.618_033_988_749_894_9;
    let a = DMatrix::from_fn(m, m, |r, c| {
        let (x, y) = (w[(r, c)], w[(c, r)]);
        Complex::new(0.5 * (x + y), -0.5 * t * (x - y))
    });
    let eig = SymmetricEigen::try_new(a, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("Hermitian eigensolve did not converge".into()))?;
    let u = eig.eigenvectors;
    let wu = w.map(|v| Complex::new(v, 0.0)) * &u;
    Ok((0..m).map(|k| u.column(k).dotc(&wu.column(k))).collect())
}

fn dense_residual(chain: &DiscreteChain, predicted: &[f64]) -> Result<f64> {
    let w = walk_operator(chain);
    let computed = walk_eigenvalues(&w)?;
    let mut a: Vec<f64> = computed.iter().map(|&z| canonical_phase(z)).collect();
    let mut b = predicted.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let modulus = computed.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    let gap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (Complex::from_polar(1.0, *x) - Complex::from_polar(1.0, *y)).norm())
        .fold(0.0, f64::max);
    Ok(gap.max(modulus))
}

/// CSV with columns `lambda, phase, overlap`; one row per eigenvalue of
/// `D`, phase `arccos λ`. Overlaps are left empty without a profile.
pub fn write_spectrum_csv<W: Write>(mut w: W, s: &WalkSpectrum, profile: Option<&GapProfile>) -> std::io::Result<()> {
    writeln!(w, "lambda,phase,overlap")?;
    for (i, &l) in s.disc_eigs.iter().enumerate() {
        let overlap = profile.and_then(|p| p.modes.get(i)).map(|m| format!("{:.16e}", m.overlap)).unwrap_or_default();
        writeln!(w, "{:.16e},{:.16e},{}", l, l.clamp(-1.0, 1.0).acos(), overlap)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(p: &[f64], pi: Vec<f64>) -> DiscreteChain {
        let n = pi.len();
        let grid = (0..n).map(|i| vec![i as f64]).collect();
        DiscreteChain::new(grid, DMatrix::from_row_slice(n, n, p), pi).unwrap()
    }

    #[test]
    fn two_state_phases() {
        let s = walk_spectrum(&chain(&[0.5, 0.5, 0.5, 0.5], vec![0.5, 0.5])).unwrap();
        let want = [0.0, PI / 2.0, -PI / 2.0, PI];
        for (a, b) in s.phases.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{:?}", s.phases);
        }
        assert!((s.delta - 1.0).abs() < 1e-12);
        assert!((s.phase_gap - PI / 2.0).abs() < 1e-12);
        assert!(s.dense_residual.unwrap() < 1e-8);
    }

    #[test]
    fn identity_has_only_real_phases() {
        let s = walk_spectrum(&chain(&[1.0, 0.0, 0.0, 1.0], vec![0.5, 0.5])).unwrap();
        assert!(s.phases.iter().all(|&p| p == 0.0 || p == PI));
        assert_eq!(s.phase_gap, PI);
        assert!(s.dense_residual.unwrap() < 1e-8);
    }

    #[test]
    fn walk_is_orthogonal() {
        let c = chain(&[0.7, 0.3, 0.0, 0.15, 0.6, 0.25, 0.0, 0.25, 0.75], vec![0.2, 0.4, 0.4]);
        let w = walk_operator(&c);
        let err = (&w * w.transpose() - DMatrix::identity(9, 9)).abs().max();
        assert!(err < 1e-12);
        assert!(walk_spectrum(&c).unwrap().dense_residual.unwrap() < 1e-8);
    }
}

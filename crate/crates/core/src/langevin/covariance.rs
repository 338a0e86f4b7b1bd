//! Covariances of the Gaussian increments entering one exact ULD step.
//!
//! With `γ = 2` and `u = 1/L`, a step of length `h` needs, per coordinate,
//!
//! - `W1 = ∫_0^h e^{2(s-h)} dB_s`
//! - `W2 = ∫_0^h (1 - e^{2(s-h)}) dB_s`
//! - `W3 = ∫_0^{αh} (1 - e^{2(s-αh)}) dB_s` (randomized midpoint only).
//!
//! All entries follow from the Itô isometry. Small arguments use power
//! series to avoid cancellation.

use crate::error::{Error, Result};

const SERIES_CUTOFF: f64 = 0.1;

/// `1 - e^{-x}`.
pub(crate) fn one_minus_exp(x: f64) -> f64 {
    -(-x).exp_m1()
}

fn series(x: f64, coeff: impl Fn(i32) -> f64) -> f64 {
    // Σ_{n≥1} coeff(n) x^{n+1} / (n+1)!
    let mut term = x; // x^{n+1}/(n+1)! at n = 0
    let mut total = 0.0;
    for n in 1..30 {
        term *= x / (n + 1) as f64;
        let t = coeff(n) * term;
        total += t;
        if t.abs() < 1e-18 * total.abs() {
            break;
        }
    }
    total
}

/// `∫_0^x (1 - e^{-2u}) du = x - (1 - e^{-2x})/2`.
pub(crate) fn omega(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        series(x, |n| -(-2f64).powi(n))
    } else {
        x - 0.5 * one_minus_exp(2.0 * x)
    }
}

/// `∫_0^x (e^{-2u} - e^{-4u}) du`.
pub(crate) fn chi(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        series(x, |n| (-2f64).powi(n) - (-4f64).powi(n))
    } else {
        0.5 * one_minus_exp(2.0 * x) - 0.25 * one_minus_exp(4.0 * x)
    }
}

/// `∫_0^x (1 - e^{-2u})² du`.
pub(crate) fn psi(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        series(x, |n| if n == 1 { 0.0 } else { (-4f64).powi(n) - 2.0 * (-2f64).powi(n) })
    } else {
        x - one_minus_exp(2.0 * x) + 0.25 * one_minus_exp(4.0 * x)
    }
}

/// Per-coordinate covariance of `(W1, W2)` or `(W1, W2, W3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementCovariance {
    pub h: f64,
    pub alpha: Option<f64>,
    /// Row-major; only the leading `dim()×dim()` block is used.
    pub cov: [[f64; 3]; 3],
}

impl IncrementCovariance {
    pub fn dim(&self) -> usize {
        if self.alpha.is_some() {
            3
        } else {
            2
        }
    }

    /// Lower-triangular factor; pivots are clamped at zero so the
    /// degenerate `α = 0` case (where `W3 ≡ 0`) is handled exactly.
    pub fn cholesky(&self) -> [[f64; 3]; 3] {
        let n = self.dim();
        let c = &self.cov;
        let mut l = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    l[i][i] = (c[i][i] - s).max(0.0).sqrt();
                } else if l[j][j] > 0.0 {
                    l[i][j] = (c[i][j] - s) / l[j][j];
                }
            }
        }
        l
    }
}

/// Covariance of `(W1, W2)` for a ULD step of length `h`.
pub fn uld_covariance(h: f64) -> Result<IncrementCovariance> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", format!("step must be positive and finite, got {h}")));
    }
    let v1 = 0.25 * one_minus_exp(4.0 * h);
    let c12 = chi(h);
    let v2 = psi(h);
    Ok(IncrementCovariance { h, alpha: None, cov: [[v1, c12, 0.0], [c12, v2, 0.0], [0.0, 0.0, 0.0]] })
}

/// Covariance of `(W1, W2, W3)` for a randomized-midpoint step at fraction `alpha`.
pub fn uld_rmm_covariance(h: f64, alpha: f64) -> Result<IncrementCovariance> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    let mut c = uld_covariance(h)?;
    let a = alpha * h;
    let b = h - a;
    let c13 = (-2.0 * b).exp() * chi(a);
    let c23 = omega(a) - c13;
    let v3 = psi(a);
    c.alpha = Some(alpha);
    c.cov[0][2] = c13;
    c.cov[2][0] = c13;
    c.cov[1][2] = c23;
    c.cov[2][1] = c23;
    c.cov[2][2] = v3;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(x: f64) -> (f64, f64, f64) {
        (
            x - 0.5 * one_minus_exp(2.0 * x),
            0.5 * one_minus_exp(2.0 * x) - 0.25 * one_minus_exp(4.0 * x),
            x - one_minus_exp(2.0 * x) + 0.25 * one_minus_exp(4.0 * x),
        )
    }

    #[test]
    fn series_agree_with_closed_forms_near_cutoff() {
        for x in [0.05, 0.0999] {
            let (o, c, p) = direct(x);
            assert!((omega(x) - o).abs() < 1e-14 * o);
            assert!((chi(x) - c).abs() < 1e-13 * c);
            assert!((psi(x) - p).abs() < 1e-11 * p);
        }
    }

    #[test]
    fn small_and_large_step_limits() {
        let c = uld_covariance(1e-6).unwrap();
        assert!((c.cov[0][0] / 1e-6 - 1.0).abs() < 1e-5);
        assert!(c.cov[1][1] < 1e-17 && c.cov[0][1] < 1e-11);
        let c = uld_covariance(50.0).unwrap();
        assert!((c.cov[0][0] - 0.25).abs() < 1e-15);
        assert!(uld_covariance(0.0).is_err());
        assert!(uld_covariance(-1.0).is_err());
    }

    #[test]
    fn full_midpoint_reproduces_w2() {
        // α = 1 makes W3 = W2.
        let c = uld_rmm_covariance(0.3, 1.0).unwrap();
        assert!((c.cov[2][2] - c.cov[1][1]).abs() < 1e-15);
        assert!((c.cov[1][2] - c.cov[1][1]).abs() < 1e-15);
        assert!((c.cov[0][2] - c.cov[0][1]).abs() < 1e-15);
    }

    #[test]
    fn cholesky_reconstructs() {
        let c = uld_rmm_covariance(0.5, 0.37).unwrap();
        let l = c.cholesky();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((s - c.cov[i][j]).abs() < 1e-15);
            }
        }
        let zero = uld_rmm_covariance(0.5, 0.0).unwrap().cholesky();
        assert_eq!(zero[2], [0.0, 0.0, 0.0]);
    }
}

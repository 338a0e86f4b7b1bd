#![allow(dead_code)]

use logz_lab::Potential;

/// `f(x) = μx²/2` on the line with a declared smoothness `l ≥ μ`.
pub struct Quadratic1 {
    pub mu: f64,
    pub l: f64,
}

impl Potential for Quadratic1 {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.mu * x[0] * x[0]
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.mu * x[0];
    }
    fn smoothness(&self) -> f64 {
        self.l
    }
    fn convexity(&self) -> f64 {
        self.mu
    }
}

/// `f ≡ 0`, used to isolate free-flight behaviour.
pub struct Flat(pub usize);

impl Potential for Flat {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn smoothness(&self) -> f64 {
        1.0
    }
    fn convexity(&self) -> f64 {
        1.0
    }
}

/// Centred normal with variance `var`, restricted to `points` and renormalized.
pub fn grid_normal(points: &[Vec<f64>], var: f64) -> Vec<f64> {
    let w: Vec<f64> = points.iter().map(|x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>() / var).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300)
}

//! Gauss–Legendre quadrature (Golub–Welsch) and composite rules in one and
//! two dimensions.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let b = kf / (4.0 * kf * kf - 1.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    /// `∫_a^b f` with this rule on a single panel.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(mid + half * t)).sum::<f64>()
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn composite(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * width;
                self.integrate(lo, lo + width, &f)
            })
            .sum()
    }

    /// Composite tensor rule over the square `[a, b]²`.
    pub fn composite_2d(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
        let width = (b - a) / panels as f64;
        let half = 0.5 * width;
        let mut pts = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (&t, &w) in self.nodes.iter().zip(&self.weights) {
                pts.push((mid + half * t, w * half));
            }
        }
        let mut total = 0.0;
        for &(x, wx) in &pts {
            for &(y, wy) in &pts {
                total += wx * wy * f(x, y);
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_symmetric() {
        let gl = GaussLegendre::new(9);
        assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        for (a, b) in gl.nodes.iter().zip(gl.nodes.iter().rev()) {
            assert!((a + b).abs() < 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(5);
        let val = gl.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((val - 2f64.powi(10) / 10.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_integral() {
        let gl = GaussLegendre::new(20);
        let one_d = gl.composite(-12.0, 12.0, 24, |x| (-0.5 * x * x).exp());
        assert!((one_d - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let two_d = gl.composite_2d(-12.0, 12.0, 12, |x, y| (-0.5 * (x * x + y * y)).exp());
        assert!((two_d - 2.0 * std::f64::consts::PI).abs() < 1e-11);
    }
}

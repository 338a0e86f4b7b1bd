//! Sources of the Gaussian increments consumed by the integrators.
//!
//! [`BrownianPath`] stores, for each interval `[a, b]` and coordinate, the
//! pair `(ΔB, K)` with `K = ∫_a^b (1 - e^{2(s-b)}) dB_s`. Any interval can be
//! split by sampling from the exact conditional law, so schemes with
//! different step sizes (and random midpoints) can share one path.

use rand::Rng;
use rand_distr::StandardNormal;

use super::covariance::{omega, one_minus_exp, psi, uld_covariance, uld_rmm_covariance, IncrementCovariance};

/// Relative tolerance for snapping a time onto an existing breakpoint.
const SNAP: f64 = 1e-12;

/// Supplies `(W1, W2)` for plain steps and `(α, W1, W2, W3)` for
/// randomized-midpoint steps over `[t, t + h]`.
pub trait IncrementSource {
    fn uld(&mut self, t: f64, h: f64, w1: &mut [f64], w2: &mut [f64]);

    /// Draws `α ~ U[0, 1]` and the matching increments; returns `α`.
    fn rmm(&mut self, t: f64, h: f64, w1: &mut [f64], w2: &mut [f64], w3: &mut [f64]) -> f64;
}

impl<I: IncrementSource + ?Sized> IncrementSource for &mut I {
    fn uld(&mut self, t: f64, h: f64, w1: &mut [f64], w2: &mut [f64]) {
        (**self).uld(t, h, w1, w2)
    }
    fn rmm(&mut self, t: f64, h: f64, w1: &mut [f64], w2: &mut [f64], w3: &mut [f64]) -> f64 {
        (**self).rmm(t, h, w1, w2, w3)
    }
}

/// Fresh independent draws from the joint covariance each step.
pub struct Independent<R> {
    rng: R,
    cached: Option<(f64, [[f64; 3]; 3])>,
}

impl<R: Rng> Independent<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, cached: None }
    }

    fn fill(&mut self, chol: &[[f64; 3]; 3], n: usize, out: &mut [&mut [f64]]) {
        let d = out[0].len();
        let mut z = [0.0; 3];
        for i in 0..d {
            for zk in z.iter_mut().take(n) {
                *zk = self.rng.sample(StandardNormal);
            }
            for (r, o) in out.iter_mut().enumerate() {
                o[i] = (0..=r).map(|k| chol[r][k] * z[k]).sum();
            }
        }
    }
}

impl<R: Rng> IncrementSource for Independent<R> {
    fn uld(&mut self, _t: f64, h: f64, w1: &mut [f64], w2: &mut [f64]) {
        let chol = match self.cached {
            Some((ch, l)) if ch == h => l,
            _ => {
                let l = uld_covariance(h).expect("positive step").cholesky();
                self.cached = Some((h, l));
                l
            }
        };
        self.fill(&chol, 2, &mut [w1, w2]);
    }

    fn rmm(&mut self, _t: f64, h: f64, w1: &mut [f64], w2: &mut [f64], w3: &mut [f64]) -> f64 {
        let alpha: f64 = self.rng.random();
        let chol = uld_rmm_covariance(h, alpha).expect("valid midpoint").cholesky();
        self.fill(&chol, 3, &mut [w1, w2, w3]);
        alpha
    }
}

/// All increments zero, midpoint pinned. Useful for checking the drift.
#[derive(Debug, Clone, Copy)]
pub struct ZeroNoise {
    pub alpha: f64,
}

impl IncrementSource for ZeroNoise {
    fn uld(&mut self, _t: f64, _h: f64, w1: &mut [f64], w2: &mut [f64]) {
        w1.fill(0.0);
        w2.fill(0.0);
    }
    fn rmm(&mut self, _t: f64, _h: f64, w1: &mut [f64], w2: &mut [f64], w3: &mut [f64]) -> f64 {
        w1.fill(0.0);
        w2.fill(0.0);
        w3.fill(0.0);
        self.alpha
    }
}

/// Covariance of `(ΔB, K)` over an interval of length `len`.
fn pair_cov(len: f64) -> [[f64; 2]; 2] {
    let c = omega(len);
    [[len, c], [c, psi(len)]]
}

fn chol2(c: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let l00 = c[0][0].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { c[1][0] / l00 } else { 0.0 };
    let l11 = (c[1][1] - l10 * l10).max(0.0).sqrt();
    [[l00, 0.0], [l10, l11]]
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> [f64; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [(a[1][1] * b[0] - a[0][1] * b[1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det]
}

/// A piecewise-refinable Brownian path on `[0, t_end]`.
pub struct BrownianPath<R> {
    d: usize,
    times: Vec<f64>,
    /// `incs[k][i] = (ΔB, K)` on interval `k`, coordinate `i`.
    incs: Vec<Vec<[f64; 2]>>,
    rng: R,
    alpha_rng: R,
}

impl<R: Rng> BrownianPath<R> {
    /// Samples the path on `n` equal intervals. `alpha_rng` drives the
    /// randomized midpoints so they do not disturb the path's own stream.
    pub fn new(d: usize, t_end: f64, n: usize, mut rng: R, alpha_rng: R) -> Self {
        assert!(t_end > 0.0 && n > 0, "path needs a positive horizon and at least one interval");
        let len = t_end / n as f64;
        let chol = chol2(pair_cov(len));
        let times = (0..=n).map(|k| if k == n { t_end } else { k as f64 * len }).collect();
        let incs = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let z0: f64 = rng.sample(StandardNormal);
                        let z1: f64 = rng.sample(StandardNormal);
                        [chol[0][0] * z0, chol[1][0] * z0 + chol[1][1] * z1]
                    })
                    .collect()
            })
            .collect();
        Self { d, times, incs, rng, alpha_rng }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn intervals(&self) -> usize {
        self.incs.len()
    }

    /// Index of the breakpoint at `t`, inserting one if needed.
    pub fn refine(&mut self, t: f64) -> usize {
        let tol = SNAP * self.horizon().max(1.0);
        let pos = self.times.partition_point(|&s| s < t - tol);
        if pos < self.times.len() && (self.times[pos] - t).abs() <= tol {
            return pos;
        }
        assert!(pos > 0 && pos < self.times.len(), "time {t} outside the path");
        self.split(pos - 1, t);
        pos
    }

    /// Splits interval `k` at time `t` by conditional sampling.
    fn split(&mut self, k: usize, t: f64) {
        let (a, b) = (self.times[k], self.times[k + 1]);
        let (p, q, h) = (t - a, b - t, b - a);
        // Left block in the coordinates (ΔB/√p, K/p^{3/2}); totals likewise with h.
        let sl = [p.sqrt(), p.powf(1.5)];
        let sh = [h.sqrt(), h.powf(1.5)];
        let cl = pair_cov(p);
        let ch = pair_cov(h);
        let eq = (-2.0 * q).exp();
        let fq = one_minus_exp(2.0 * q);
        // Y = A X_l + X_r with A = [[1, 0], [1 - e^{-2q}, e^{-2q}]].
        let amat = [[1.0, 0.0], [fq, eq]];
        let mut cross = [[0.0; 2]; 2]; // Cov(X_l, Y) scaled
        for i in 0..2 {
            for j in 0..2 {
                let raw: f64 = (0..2).map(|m| cl[i][m] * amat[j][m]).sum();
                cross[i][j] = raw / (sl[i] * sh[j]);
            }
        }
        let syy = [
            [ch[0][0] / (sh[0] * sh[0]), ch[0][1] / (sh[0] * sh[1])],
            [ch[1][0] / (sh[1] * sh[0]), ch[1][1] / (sh[1] * sh[1])],
        ];
        // gain = cross · syy^{-1}, via syy symmetric: rows of gain solve syy g = cross_row
        let gain = [solve2(syy, cross[0]), solve2(syy, cross[1])];
        let mut cond = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let prior = cl[i][j] / (sl[i] * sl[j]);
                let explained: f64 = (0..2).map(|m| gain[i][m] * cross[j][m]).sum();
                cond[i][j] = prior - explained;
            }
        }
        cond[0][1] = 0.5 * (cond[0][1] + cond[1][0]);
        cond[1][0] = cond[0][1];
        let chol = chol2(cond);

        let total = std::mem::take(&mut self.incs[k]);
        let mut left = Vec::with_capacity(self.d);
        let mut right = Vec::with_capacity(self.d);
        for y in &total {
            let ys = [y[0] / sh[0], y[1] / sh[1]];
            let z0: f64 = self.rng.sample(StandardNormal);
            let z1: f64 = self.rng.sample(StandardNormal);
            let xl0 = sl[0] * (gain[0][0] * ys[0] + gain[0][1] * ys[1] + chol[0][0] * z0);
            let xl1 = sl[1] * (gain[1][0] * ys[0] + gain[1][1] * ys[1] + chol[1][0] * z0 + chol[1][1] * z1);
            left.push([xl0, xl1]);
            right.push([y[0] - xl0, y[1] - (fq * xl0 + eq * xl1)]);
        }
        self.incs[k] = left;
        self.incs.insert(k + 1, right);
        self.times.insert(k + 1, t);
    }

    /// `(ΔB, K)` per coordinate over `[a, b]`, refining as needed.
    pub fn increment(&mut self, a: f64, b: f64, out: &mut [[f64; 2]]) {
        let ia = self.refine(a);
        let ib = self.refine(b);
        out.iter_mut().for_each(|o| *o = [0.0, 0.0]);
        for k in ia..ib {
            let len = self.times[k + 1] - self.times[k];
            let e = (-2.0 * len).exp();
            let f = one_minus_exp(2.0 * len);
            for (o, inc) in out.iter_mut().zip(&self.incs[k]) {
                o[1] = f * o[0] + e * o[1] + inc[1];
                o[0] += inc[0];
            }
        }
    }
}

impl<R: Rng> IncrementSource for BrownianPath<R> {
    fn uld(&mut self, t: f64, h: f64, w1: &mut [f64], w2: &mut [f64]) {
        let mut buf = vec![[0.0; 2]; self.d];
        self.increment(t, t + h, &mut buf);
        for ((a, b), inc) in w1.iter_mut().zip(w2.iter_mut()).zip(&buf) {
            *a = inc[0] - inc[1];
            *b = inc[1];
        }
    }

    fn rmm(&mut self, t: f64, h: f64, w1: &mut [f64], w2: &mut [f64], w3: &mut [f64]) -> f64 {
        let alpha: f64 = self.alpha_rng.random();
        let mid = t + alpha * h;
        let mut left = vec![[0.0; 2]; self.d];
        let mut right = vec![[0.0; 2]; self.d];
        self.increment(t, mid, &mut left);
        self.increment(mid, t + h, &mut right);
        let q = t + h - mid;
        let e = (-2.0 * q).exp();
        let f = one_minus_exp(2.0 * q);
        for i in 0..self.d {
            let db = left[i][0] + right[i][0];
            let k = f * left[i][0] + e * left[i][1] + right[i][1];
            w1[i] = db - k;
            w2[i] = k;
            w3[i] = left[i][1];
        }
        alpha
    }
}

/// Covariance used by [`Independent`]; exposed for diagnostics.
pub fn increment_covariance(h: f64, alpha: Option<f64>) -> IncrementCovariance {
    match alpha {
        Some(a) => uld_rmm_covariance(h, a).expect("valid"),
        None => uld_covariance(h).expect("valid"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::Moments;

    #[test]
    fn refined_path_preserves_totals() {
        let mut path = BrownianPath::new(3, 1.0, 4, rng::stream(1, 0), rng::stream(1, 1));
        let mut before = vec![[0.0; 2]; 3];
        path.increment(0.0, 1.0, &mut before);
        for t in [0.1, 0.33, 0.9, 0.55, 0.25] {
            path.refine(t);
        }
        assert_eq!(path.intervals(), 8);
        let mut after = vec![[0.0; 2]; 3];
        path.increment(0.0, 1.0, &mut after);
        for (a, b) in before.iter().zip(&after) {
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn split_pieces_have_the_right_law() {
        // Split [0, 0.5] at 0.15: the left piece must be N(0, pair_cov(0.15)).
        let n = 40_000;
        let (mut m0, mut m1) = (Moments::new(), Moments::new());
        let mut cross = 0.0;
        for s in 0..n {
            let mut p = BrownianPath::new(1, 0.5, 1, rng::stream(9, s), rng::stream(9, s + n));
            let mut out = [[0.0; 2]];
            p.increment(0.0, 0.15, &mut out);
            m0.push(out[0][0]);
            m1.push(out[0][1]);
            cross += out[0][0] * out[0][1];
        }
        let c = pair_cov(0.15);
        assert!((m0.variance() / c[0][0] - 1.0).abs() < 0.03);
        assert!((m1.variance() / c[1][1] - 1.0).abs() < 0.03);
        assert!((cross / n as f64 / c[0][1] - 1.0).abs() < 0.03);
    }

    #[test]
    fn zero_noise_pins_alpha() {
        let mut z = ZeroNoise { alpha: 0.0 };
        let (mut a, mut b, mut c) = ([1.0], [1.0], [1.0]);
        assert_eq!(z.rmm(0.0, 0.1, &mut a, &mut b, &mut c), 0.0);
        assert_eq!((a[0], b[0], c[0]), (0.0, 0.0, 0.0));
    }
}

//! One step of ULD and of its randomized-midpoint variant.
//!
//! Friction `γ = 2` and inverse mass `u = 1/L`. The gradient is frozen over
//! the step (at `x` for ULD, at the random midpoint `y` for ULD-RMM) and the
//! remaining linear dynamics are integrated exactly.

use super::brownian::IncrementSource;
use super::covariance::{omega, one_minus_exp};
use super::{GradientOracle, PhaseState, Scheme};
use crate::oracle::Potential;

/// Scratch buffers for stepping a `d`-dimensional chain without allocating.
pub struct Integrator {
    g: Vec<f64>,
    y: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    w3: Vec<f64>,
}

impl Integrator {
    pub fn new(d: usize) -> Self {
        Self { g: vec![0.0; d], y: vec![0.0; d], w1: vec![0.0; d], w2: vec![0.0; d], w3: vec![0.0; d] }
    }

    /// Advances `state` from time `t` to `t + h`. Returns the midpoint
    /// fraction used (`None` for plain ULD).
    pub fn step<P, I>(
        &mut self,
        scheme: Scheme,
        grad: &mut GradientOracle<'_, P>,
        state: &mut PhaseState,
        t: f64,
        h: f64,
        inc: &mut I,
    ) -> Option<f64>
    where
        P: Potential + ?Sized,
        I: IncrementSource + ?Sized,
    {
        match scheme {
            Scheme::Uld => {
                self.uld(grad, state, t, h, inc);
                None
            }
            Scheme::UldRmm => Some(self.rmm(grad, state, t, h, inc)),
        }
    }

    fn uld<P, I>(&mut self, grad: &mut GradientOracle<'_, P>, s: &mut PhaseState, t: f64, h: f64, inc: &mut I)
    where
        P: Potential + ?Sized,
        I: IncrementSource + ?Sized,
    {
        let l = grad.smoothness();
        inc.uld(t, h, &mut self.w1, &mut self.w2);
        grad.eval(&s.x, &mut self.g);
        let decay = (-2.0 * h).exp();
        let fv = one_minus_exp(2.0 * h);
        let gv = fv / (2.0 * l);
        let gx = omega(h) / (2.0 * l);
        let (nv, nx) = (2.0 / l.sqrt(), 1.0 / l.sqrt());
        for i in 0..s.x.len() {
            let v = s.v[i];
            s.v[i] = decay * v - gv * self.g[i] + nv * self.w1[i];
            s.x[i] += 0.5 * fv * v - gx * self.g[i] + nx * self.w2[i];
        }
    }

    fn rmm<P, I>(&mut self, grad: &mut GradientOracle<'_, P>, s: &mut PhaseState, t: f64, h: f64, inc: &mut I) -> f64
    where
        P: Potential + ?Sized,
        I: IncrementSource + ?Sized,
    {
        let l = grad.smoothness();
        let alpha = inc.rmm(t, h, &mut self.w1, &mut self.w2, &mut self.w3);
        let a = alpha * h;
        let nx = 1.0 / l.sqrt();
        let nv = 2.0 * nx;

        grad.eval(&s.x, &mut self.g);
        let fa = one_minus_exp(2.0 * a);
        let ga = omega(a) / (2.0 * l);
        for i in 0..s.x.len() {
            self.y[i] = s.x[i] + 0.5 * fa * s.v[i] - ga * self.g[i] + nx * self.w3[i];
        }

        grad.eval(&self.y, &mut self.g);
        let decay = (-2.0 * h).exp();
        let fv = one_minus_exp(2.0 * h);
        let rest = h - a;
        let gv = h * (-2.0 * rest).exp() / l;
        let gx = h * one_minus_exp(2.0 * rest) / (2.0 * l);
        for i in 0..s.x.len() {
            let v = s.v[i];
            s.v[i] = decay * v - gv * self.g[i] + nv * self.w1[i];
            s.x[i] += 0.5 * fv * v - gx * self.g[i] + nx * self.w2[i];
        }
        alpha
    }

    /// Midpoint computed by the last randomized-midpoint step.
    pub fn last_midpoint(&self) -> &[f64] {
        &self.y
    }
}

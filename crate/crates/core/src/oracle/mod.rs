//! Target functions and their oracles.

mod conditioning;
mod hard;
mod instance;
pub(crate) mod noise;

pub use conditioning::{hessian_extremes, numerical_hessian, verify_conditioning, Region};
pub use hard::{bump, HardInstance, TypeChoice};
pub use instance::{FunctionInstance, LogisticInstance};
pub use noise::{noisy_gradient, NoiseConfig};

/// A smooth, strongly convex potential `f` on `R^d` with certified constants.
///
/// The hot-path methods do not check dimensions; use the checked helpers on
/// [`FunctionInstance`] at API boundaries.
pub trait Potential: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    /// Gradient Lipschitz constant `L`.
    fn smoothness(&self) -> f64;
    /// Strong convexity constant `mu`.
    fn convexity(&self) -> f64;

    fn minimizer(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn condition_number(&self) -> f64 {
        self.smoothness() / self.convexity()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient_into(x, out)
    }
    fn smoothness(&self) -> f64 {
        (**self).smoothness()
    }
    fn convexity(&self) -> f64 {
        (**self).convexity()
    }
    fn minimizer(&self) -> Vec<f64> {
        (**self).minimizer()
    }
}

/// `f(x + shift) - offset`; used to move a minimizer to the origin.
pub struct Shifted<P> {
    pub inner: P,
    pub shift: Vec<f64>,
    pub offset: f64,
}

impl<P: Potential> Shifted<P> {
    /// Recentres `inner` so the minimizer sits at 0 with value 0.
    pub fn centred(inner: P) -> Self {
        let shift = inner.minimizer();
        let offset = inner.value(&shift);
        Self { inner, shift, offset }
    }

    fn moved(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).map(|(a, b)| a + b).collect()
    }
}

impl<P: Potential> Potential for Shifted<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(&self.moved(x)) - self.offset
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient_into(&self.moved(x), out)
    }
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }
    fn convexity(&self) -> f64 {
        self.inner.convexity()
    }
    fn minimizer(&self) -> Vec<f64> {
        let m = self.inner.minimizer();
        m.iter().zip(&self.shift).map(|(a, b)| a - b).collect()
    }
}

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hard::HardInstance;
use super::Potential;
use crate::error::{check_dim, Error, Result};

/// Shipped benchmark targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionInstance {
    /// `‖x‖²/2`.
    Gaussian {
        dim: usize,
    },
    /// `½ Σ a_i x_i²`.
    DiagonalQuadratic {
        coeffs: Vec<f64>,
    },
    Logistic(LogisticInstance),
    Hard(HardInstance),
}

impl FunctionInstance {
    pub fn gaussian(dim: usize) -> Self {
        FunctionInstance::Gaussian { dim }
    }

    pub fn diagonal(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid("coeffs", "need a nonempty list of positive values"));
        }
        Ok(FunctionInstance::DiagonalQuadratic { coeffs })
    }

    /// Diagonal quadratic with coefficients spread geometrically on `[1, kappa]`.
    pub fn conditioned(dim: usize, kappa: f64) -> Result<Self> {
        if dim == 0 || kappa < 1.0 {
            return Err(Error::invalid("kappa", "need dim >= 1 and kappa >= 1"));
        }
        let coeffs = (0..dim).map(|i| if dim == 1 { kappa } else { kappa.powf(i as f64 / (dim - 1) as f64) }).collect();
        Self::diagonal(coeffs)
    }

    /// Checked evaluation.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value(x))
    }

    /// Checked gradient.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.gradient(x))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionInstance::Gaussian { dim } if *dim == 0 => Err(Error::invalid("dim", "must be >= 1")),
            FunctionInstance::DiagonalQuadratic { coeffs } => Self::diagonal(coeffs.clone()).map(|_| ()),
            FunctionInstance::Logistic(l) => l.validate(),
            FunctionInstance::Hard(h) => h.validate(),
            _ => Ok(()),
        }
    }
}

impl Potential for FunctionInstance {
    fn dim(&self) -> usize {
        match self {
            FunctionInstance::Gaussian { dim } => *dim,
            FunctionInstance::DiagonalQuadratic { coeffs } => coeffs.len(),
            FunctionInstance::Logistic(l) => l.dim(),
            FunctionInstance::Hard(h) => h.dim(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            FunctionInstance::Gaussian { .. } => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            FunctionInstance::DiagonalQuadratic { coeffs } => {
                0.5 * coeffs.iter().zip(x).map(|(a, v)| a * v * v).sum::<f64>()
            }
            FunctionInstance::Logistic(l) => l.value(x),
            FunctionInstance::Hard(h) => h.value(x),
        }
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FunctionInstance::Gaussian { .. } => out.copy_from_slice(x),
            FunctionInstance::DiagonalQuadratic { coeffs } => {
                for ((o, a), v) in out.iter_mut().zip(coeffs).zip(x) {
                    *o = a * v;
                }
            }
            FunctionInstance::Logistic(l) => l.gradient_into(x, out),
            FunctionInstance::Hard(h) => h.gradient_into(x, out),
        }
    }

    fn smoothness(&self) -> f64 {
        match self {
            FunctionInstance::Gaussian { .. } => 1.0,
            FunctionInstance::DiagonalQuadratic { coeffs } => coeffs.iter().copied().fold(f64::MIN, f64::max),
            FunctionInstance::Logistic(l) => l.smoothness(),
            FunctionInstance::Hard(h) => h.smoothness(),
        }
    }

    fn convexity(&self) -> f64 {
        match self {
            FunctionInstance::Gaussian { .. } => 1.0,
            FunctionInstance::DiagonalQuadratic { coeffs } => coeffs.iter().copied().fold(f64::MAX, f64::min),
            FunctionInstance::Logistic(l) => l.convexity(),
            FunctionInstance::Hard(h) => h.convexity(),
        }
    }
}

/// `(mu/2)‖x‖² + Σ_j w_j log cosh(a_jᵀx)`: smooth, even, minimized at 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticInstance {
    pub mu: f64,
    pub weights: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    /// `mu + λ_max(Σ w_j a_j a_jᵀ)`.
    pub smoothness: f64,
}

fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl LogisticInstance {
    /// `m` random Gaussian directions scaled by `1/√d`, equal weights.
    pub fn random(dim: usize, m: usize, mu: f64, weight: f64, seed: u64) -> Result<Self> {
        if dim == 0 || m == 0 || mu <= 0.0 || weight < 0.0 {
            return Err(Error::invalid("logistic", "need dim, m >= 1, mu > 0, weight >= 0"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let directions = (0..m)
            .map(|_| {
                (0..dim)
                    .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        Self::new(mu, vec![weight; m], directions)
    }

    pub fn new(mu: f64, weights: Vec<f64>, directions: Vec<Vec<f64>>) -> Result<Self> {
        let dim = directions.first().map_or(0, Vec::len);
        if dim == 0 || weights.len() != directions.len() || directions.iter().any(|a| a.len() != dim) {
            return Err(Error::invalid("directions", "need equally sized nonempty directions, one per weight"));
        }
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        for (w, a) in weights.iter().zip(&directions) {
            for i in 0..dim {
                for j in 0..dim {
                    gram[(i, j)] += w * a[i] * a[j];
                }
            }
        }
        let top = SymmetricEigen::new(gram).eigenvalues.max();
        Ok(Self { mu, weights, directions, smoothness: mu + top.max(0.0) })
    }

    fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.mu, self.weights.clone(), self.directions.clone())?;
        if (fresh.smoothness - self.smoothness).abs() > 1e-9 * fresh.smoothness {
            return Err(Error::invalid("smoothness", "does not match the directions"));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.directions[0].len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let quad = 0.5 * self.mu * x.iter().map(|v| v * v).sum::<f64>();
        quad + self.weights.iter().zip(&self.directions).map(|(w, a)| w * log_cosh(dot(a, x))).sum::<f64>()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.mu * v;
        }
        for (w, a) in self.weights.iter().zip(&self.directions) {
            let s = w * dot(a, x).tanh();
            for (o, ai) in out.iter_mut().zip(a) {
                *o += s * ai;
            }
        }
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn convexity(&self) -> f64 {
        self.mu
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

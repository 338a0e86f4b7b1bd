//! Oracle-call accounting and leading-order cost predictions.
//!
//! Predictions drop every hidden constant and polylogarithmic factor, so they
//! are only meaningful as trends across a sweep, never as absolute counts.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::langevin::{strong_errors, Scheme};
use crate::oracle::Potential;
use crate::stats;

/// Thread-safe evaluation and gradient counters.
#[derive(Debug, Default)]
pub struct QueryLedger {
    evaluations: AtomicU64,
    gradients: AtomicU64,
}

/// Point-in-time copy of a [`QueryLedger`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub evaluations: u64,
    pub gradients: u64,
}

impl LedgerSnapshot {
    pub fn total(&self) -> u64 {
        self.evaluations + self.gradients
    }

    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            evaluations: self.evaluations - earlier.evaluations,
            gradients: self.gradients - earlier.gradients,
        }
    }
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_evaluations(&self, n: u64) {
        self.evaluations.fetch_add(n, Ordering::Relaxed);
    }

    pub fn record_gradients(&self, n: u64) {
        self.gradients.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            evaluations: self.evaluations.load(Ordering::Relaxed),
            gradients: self.gradients.load(Ordering::Relaxed),
        }
    }
}

/// Wraps a potential and counts every call made through it.
pub struct Metered<'a, P: ?Sized> {
    inner: &'a P,
    ledger: &'a QueryLedger,
}

impl<'a, P: Potential + ?Sized> Metered<'a, P> {
    pub fn new(inner: &'a P, ledger: &'a QueryLedger) -> Self {
        Self { inner, ledger }
    }
}

impl<P: Potential + ?Sized> Potential for Metered<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.ledger.record_evaluations(1);
        self.inner.value(x)
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.ledger.record_gradients(1);
        self.inner.gradient_into(x, out)
    }
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }
    fn convexity(&self) -> f64 {
        self.inner.convexity()
    }
    fn minimizer(&self) -> Vec<f64> {
        self.inner.minimizer()
    }
}

/// Rows of the sampling and estimation complexity tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Uld,
    UldRmm,
    Mala,
    MalaWarm,
    QuantumInexactUld,
    QuantumInexactUldRmm,
    QuantumMala,
    QuantumMalaWarm,
    MultilevelUld,
    MultilevelUldRmm,
    AnnealingMala,
    QuantumMultilevelUld,
    QuantumMultilevelUldRmm,
    QuantumAnnealingMala,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::Uld,
        Method::UldRmm,
        Method::Mala,
        Method::MalaWarm,
        Method::QuantumInexactUld,
        Method::QuantumInexactUldRmm,
        Method::QuantumMala,
        Method::QuantumMalaWarm,
        Method::MultilevelUld,
        Method::MultilevelUldRmm,
        Method::AnnealingMala,
        Method::QuantumMultilevelUld,
        Method::QuantumMultilevelUldRmm,
        Method::QuantumAnnealingMala,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Uld => "uld",
            Method::UldRmm => "uld_rmm",
            Method::Mala => "mala",
            Method::MalaWarm => "mala_warm",
            Method::QuantumInexactUld => "quantum_inexact_uld",
            Method::QuantumInexactUldRmm => "quantum_inexact_uld_rmm",
            Method::QuantumMala => "quantum_mala",
            Method::QuantumMalaWarm => "quantum_mala_warm",
            Method::MultilevelUld => "multilevel_uld",
            Method::MultilevelUldRmm => "multilevel_uld_rmm",
            Method::AnnealingMala => "annealing_mala",
            Method::QuantumMultilevelUld => "quantum_multilevel_uld",
            Method::QuantumMultilevelUldRmm => "quantum_multilevel_uld_rmm",
            Method::QuantumAnnealingMala => "quantum_annealing_mala",
        }
    }

    pub fn is_quantum(self) -> bool {
        self.name().starts_with("quantum")
    }

    /// True for normalizing-constant estimation rows.
    pub fn is_estimation(self) -> bool {
        matches!(
            self,
            Method::MultilevelUld
                | Method::MultilevelUldRmm
                | Method::AnnealingMala
                | Method::QuantumMultilevelUld
                | Method::QuantumMultilevelUldRmm
                | Method::QuantumAnnealingMala
        )
    }

    /// Leading-order exponent of `1/eps`.
    pub fn eps_exponent(self) -> f64 {
        match self {
            Method::Uld | Method::QuantumInexactUld => 1.0,
            // dominated by the second term as eps -> 0
            Method::UldRmm | Method::QuantumInexactUldRmm => 2.0 / 3.0,
            Method::Mala | Method::MalaWarm | Method::QuantumMala | Method::QuantumMalaWarm => 0.0,
            Method::MultilevelUld | Method::MultilevelUldRmm | Method::AnnealingMala => 2.0,
            Method::QuantumMultilevelUld | Method::QuantumMultilevelUldRmm | Method::QuantumAnnealingMala => 1.0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Leading-order query cost with unit constants and no polylog factors.
pub fn predict_cost(method: Method, kappa: f64, d: f64, eps: f64) -> Result<f64> {
    if !(kappa >= 1.0 && d >= 1.0 && eps > 0.0) {
        return Err(Error::invalid(
            "kappa/d/eps",
            format!("need kappa >= 1, d >= 1, eps > 0; got ({kappa}, {d}, {eps})"),
        ));
    }
    let inv = 1.0 / eps;
    let rmm = kappa.powf(7.0 / 6.0) * d.powf(1.0 / 6.0) * inv.powf(1.0 / 3.0)
        + kappa * d.powf(1.0 / 3.0) * inv.powf(2.0 / 3.0);
    let ml_rmm = kappa.powf(7.0 / 6.0) * d.powf(7.0 / 6.0) + kappa * d.powf(4.0 / 3.0);
    Ok(match method {
        Method::Uld | Method::QuantumInexactUld => kappa * kappa * d.sqrt() * inv,
        Method::UldRmm | Method::QuantumInexactUldRmm => rmm,
        Method::Mala => kappa * d,
        Method::MalaWarm => kappa * d.sqrt(),
        Method::QuantumMala => kappa.sqrt() * d,
        Method::QuantumMalaWarm => kappa.sqrt() * d.powf(0.25),
        Method::MultilevelUld => kappa * kappa * d.powf(1.5) * inv * inv,
        Method::MultilevelUldRmm => ml_rmm * inv * inv,
        Method::AnnealingMala => kappa * d * d * inv * inv * (kappa / d).max(1.0),
        Method::QuantumMultilevelUld => kappa * kappa * d.powf(1.5) * inv,
        Method::QuantumMultilevelUldRmm => ml_rmm * inv,
        Method::QuantumAnnealingMala => kappa.sqrt() * d.powf(1.5) * inv,
    })
}

/// Exponent of `1/eps` in the quantum query lower bound for estimating the
/// normalizing constant in dimension `k`.
pub fn lower_bound_eps_exponent(k: usize) -> f64 {
    1.0 / (1.0 + 4.0 / k as f64)
}

/// Which argument a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Kappa,
    Dim,
    Eps,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kappa: f64,
    pub d: f64,
    pub eps: f64,
    pub measured: f64,
}

/// Measured vs predicted scaling exponent along one swept parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub method: Method,
    pub param: SweepParam,
    pub fitted_exponent: f64,
    pub predicted_exponent: f64,
    pub points: Vec<SweepPoint>,
    pub predictions: Vec<f64>,
}

impl ComparisonReport {
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<28} {:>10} {:>10} {:>10} {:>14} {:>14}\n",
            self.method.name(),
            "kappa",
            "d",
            "eps",
            "measured",
            "predicted"
        );
        for (p, pred) in self.points.iter().zip(&self.predictions) {
            s.push_str(&format!(
                "{:<28} {:>10.4} {:>10.1} {:>10.4} {:>14.6e} {:>14.6e}\n",
                "", p.kappa, p.d, p.eps, p.measured, pred
            ));
        }
        s.push_str(&format!(
            "exponent in {:?}: measured {:.3}, predicted {:.3}\n",
            self.param, self.fitted_exponent, self.predicted_exponent
        ));
        s
    }
}

/// Gradient calls a Langevin scheme needs to reach each accuracy in `eps`.
///
/// For each target the smallest step count `n` on the grid `5·2^{k/4}`
/// (`k ≤ 24`) whose coupled strong error at `t_end` is at most the target
/// is taken, and `n` times the per-step gradient cost is reported.
pub fn measured_gradient_counts<P: Potential + ?Sized>(
    p: &P,
    x0: &[f64],
    scheme: Scheme,
    t_end: f64,
    eps: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let counts: Vec<usize> = (0..=24).map(|k| (5.0 * 2f64.powf(k as f64 / 4.0)).round() as usize).collect();
    let finest = *counts.last().expect("nonempty");
    let errors = strong_errors(p, x0, scheme, t_end, &counts, 16 * finest, replicas, seed)?;
    eps.iter()
        .map(|&e| {
            let k = errors
                .iter()
                .position(|&err| err <= e)
                .ok_or_else(|| Error::Degenerate(format!("accuracy {e} not reached with {finest} steps")))?;
            Ok(SweepPoint {
                kappa: p.condition_number(),
                d: p.dim() as f64,
                eps: e,
                measured: (counts[k] as u64 * scheme.gradients_per_step()) as f64,
            })
        })
        .collect()
}

/// Fits the exponent of measured counts against the swept parameter.
pub fn compare(method: Method, param: SweepParam, points: &[SweepPoint]) -> Result<ComparisonReport> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("sweep needs >= 3 points, got {}", points.len())));
    }
    let axis = |p: &SweepPoint| match param {
        SweepParam::Kappa => p.kappa,
        SweepParam::Dim => p.d,
        SweepParam::Eps => p.eps,
    };
    let xs: Vec<f64> = points.iter().map(axis).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.measured).collect();
    let predictions = points.iter().map(|p| predict_cost(method, p.kappa, p.d, p.eps)).collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport {
        method,
        param,
        fitted_exponent: stats::log_log_slope(&xs, &ys)?,
        predicted_exponent: stats::log_log_slope(&xs, &predictions)?,
        points: points.to_vec(),
        predictions,
    })
}

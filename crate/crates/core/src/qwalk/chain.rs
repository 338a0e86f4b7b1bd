use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Potential;
use crate::stats::dist_sq;

const ROW_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-10;
const MIN_MOVE: f64 = 1e-6;

/// Tensor grid with `points_per_axis` nodes on each `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points_per_axis: usize,
}

impl GridConfig {
    pub fn centred(center: &[f64], half_width: f64, points_per_axis: usize) -> Self {
        Self {
            lo: center.iter().map(|c| c - half_width).collect(),
            hi: center.iter().map(|c| c + half_width).collect(),
            points_per_axis,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.points_per_axis - 1) as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    /// Nodes in row-major order, last axis fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let (d, n) = (self.dim(), self.points_per_axis);
        (0..self.len())
            .map(|mut idx| {
                let mut x = vec![0.0; d];
                for k in (0..d).rev() {
                    x[k] = self.lo[k] + (idx % n) as f64 * self.spacing(k);
                    idx /= n;
                }
                x
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || d > 2 || self.hi.len() != d {
            return Err(Error::invalid("grid", "dimension must be 1 or 2 with matching bounds"));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(h > l)) {
            return Err(Error::invalid("grid", "each axis needs hi > lo"));
        }
        let cap = if d == 1 { 512 } else { 4096 };
        if self.points_per_axis < 2 || self.len() > cap {
            return Err(Error::invalid("grid", format!("need 2 ≤ points per axis and at most {cap} nodes")));
        }
        Ok(())
    }
}

/// One-step proposal used to build a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// Random-walk Metropolis with `N(x, η² I)` proposals.
    MhGaussian { eta: f64 },
    /// One leapfrog step with fresh momentum, then a Metropolis filter.
    HmcOnestep { eta: f64 },
}

impl Kernel {
    fn eta(&self) -> f64 {
        match *self {
            Kernel::MhGaussian { eta } | Kernel::HmcOnestep { eta } => eta,
        }
    }
}

/// Reversible chain on a finite point set.
#[derive(Debug, Clone)]
pub struct DiscreteChain {
    pub grid: Vec<Vec<f64>>,
    pub p: DMatrix<f64>,
    pub pi: Vec<f64>,
}

impl DiscreteChain {
    /// Checks row sums, detailed balance and stationarity.
    pub fn new(grid: Vec<Vec<f64>>, p: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        let n = pi.len();
        if p.nrows() != n || p.ncols() != n || grid.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.nrows() });
        }
        if p.iter().any(|&v| !(v >= 0.0)) || pi.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("chain", "entries must be nonnegative"));
        }
        let mass: f64 = pi.iter().sum();
        if (mass - 1.0).abs() > ROW_TOL * n as f64 {
            return Err(Error::invalid("pi", format!("sums to {mass}")));
        }
        for x in 0..n {
            let s: f64 = p.row(x).sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::invalid("P", format!("row {x} sums to {s}")));
            }
        }
        let chain = Self { grid, p, pi };
        let r = chain.balance_residual().max(chain.stationarity_residual());
        if r > BALANCE_TOL {
            return Err(Error::invalid("chain", format!("not reversible w.r.t. pi (residual {r:e})")));
        }
        Ok(chain)
    }

    /// Metropolis chain for weights `w` (any scale) and proposal matrix `q`
    /// whose rows have mass at most 1; the remainder stays put.
    pub fn metropolis(grid: Vec<Vec<f64>>, weights: &[f64], q: &DMatrix<f64>) -> Result<Self> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Degenerate("target weights vanish".into()));
        }
        let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut p = DMatrix::zeros(n, n);
        for x in 0..n {
            if pi[x] == 0.0 {
                return Err(Error::Degenerate(format!("target has no mass at node {x}")));
            }
            let mut off = 0.0;
            for y in 0..n {
                if y != x {
                    let flow = (pi[x] * q[(x, y)]).min(pi[y] * q[(y, x)]);
                    p[(x, y)] = flow / pi[x];
                    off += p[(x, y)];
                }
            }
            if off < MIN_MOVE {
                return Err(Error::GridTooCoarse { row: x, mass: off });
            }
            p[(x, x)] = 1.0 - off;
        }
        Self::new(grid, p, pi)
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `max |π_x P_xy − π_y P_yx|`.
    pub fn balance_residual(&self) -> f64 {
        let n = self.len();
        let mut r = 0.0f64;
        for x in 0..n {
            for y in x + 1..n {
                r = r.max((self.pi[x] * self.p[(x, y)] - self.pi[y] * self.p[(y, x)]).abs());
            }
        }
        r
    }

    /// `max |(πP)_y − π_y|`.
    pub fn stationarity_residual(&self) -> f64 {
        (0..self.len())
            .map(|y| {
                let s: f64 = (0..self.len()).map(|x| self.pi[x] * self.p[(x, y)]).sum();
                (s - self.pi[y]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Coordinate dump, one `row col value` line per nonzero entry.
    pub fn write_coordinates<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for x in 0..self.len() {
            for y in 0..self.len() {
                let v = self.p[(x, y)];
                if v != 0.0 {
                    writeln!(w, "{x} {y} {v:.17e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Restricts `π ∝ e^{-f}` to the grid and builds the Metropolis chain for
/// `kernel`. Proposal densities are multiplied by the cell volume; if some
/// row then carries more than unit mass, all proposals are scaled down by
/// the same factor.
pub fn discretize_chain<P: Potential + ?Sized>(p: &P, grid: &GridConfig, kernel: Kernel) -> Result<DiscreteChain> {
    grid.validate()?;
    if p.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: grid.dim() });
    }
    let eta = kernel.eta();
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta", "must be positive"));
    }
    let pts = grid.points();
    let n = pts.len();
    let f: Vec<f64> = pts.iter().map(|x| p.value(x)).collect();
    let f_min = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = f.iter().map(|v| (f_min - v).exp()).collect();

    let centres: Vec<Vec<f64>> = match kernel {
        Kernel::MhGaussian { .. } => pts.clone(),
        Kernel::HmcOnestep { .. } => pts
            .iter()
            .map(|x| {
                let g = p.gradient(x);
                x.iter().zip(&g).map(|(xi, gi)| xi - 0.5 * eta * eta * gi).collect()
            })
            .collect(),
    };
    let d = grid.dim() as f64;
    let norm = grid.cell_volume() * (2.0 * std::f64::consts::PI * eta * eta).powf(-0.5 * d);
    let mut q = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            0.0
        } else {
            norm * (-dist_sq(&pts[y], &centres[x]) / (2.0 * eta * eta)).exp()
        }
    });
    let widest = (0..n).map(|x| q.row(x).sum()).fold(0.0, f64::max);
    if widest > 1.0 {
        q /= widest;
    }
    DiscreteChain::metropolis(pts, &weights, &q)
}

fn abstract_chain(rows: &[&[f64]], pi: &[f64]) -> Result<DiscreteChain> {
    let n = pi.len();
    let p = DMatrix::from_fn(n, n, |x, y| rows[x][y]);
    DiscreteChain::new((0..n).map(|i| vec![i as f64]).collect(), p, pi.to_vec())
}

/// Small reversible chains with known structure, each at most
/// [`DENSE_LIMIT`](super::DENSE_LIMIT) states.
pub fn reference_chains() -> Result<Vec<(&'static str, DiscreteChain)>> {
    use crate::oracle::FunctionInstance;
    let lazy_path = {
        let n = 8;
        let p = DMatrix::from_fn(n, n, |x, y| {
            let edges = [x > 0, x + 1 < n].iter().filter(|&&b| b).count() as f64;
            match x.abs_diff(y) {
                0 => 1.0 - 0.25 * edges,
                1 => 0.25,
                _ => 0.0,
            }
        });
        DiscreteChain::new((0..n).map(|i| vec![i as f64]).collect(), p, vec![1.0 / n as f64; n])?
    };
    Ok(vec![
        ("two_state", abstract_chain(&[&[0.5, 0.5], &[0.5, 0.5]], &[0.5, 0.5])?),
        ("two_state_biased", abstract_chain(&[&[0.9, 0.1], &[0.3, 0.7]], &[0.75, 0.25])?),
        (
            "birth_death_3",
            abstract_chain(&[&[0.7, 0.3, 0.0], &[0.15, 0.6, 0.25], &[0.0, 0.25, 0.75]], &[0.2, 0.4, 0.4])?,
        ),
        ("lazy_path_8", lazy_path),
        (
            "mh_gaussian_1d",
            discretize_chain(
                &FunctionInstance::gaussian(1),
                &GridConfig::centred(&[0.0], 4.0, 24),
                Kernel::MhGaussian { eta: 0.5 },
            )?,
        ),
        (
            "hmc_gaussian_2d",
            discretize_chain(
                &FunctionInstance::gaussian(2),
                &GridConfig::centred(&[0.0, 0.0], 3.0, 5),
                Kernel::HmcOnestep { eta: 0.8 },
            )?,
        ),
    ])
}

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Which cell type holds the majority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeChoice {
    MajorityType1,
    MajorityType2,
}

/// `‖x‖²/2` plus a smooth bump `c_τ q((x - v_τ)/l)` on every type-2 cell.
///
/// The cells tile `[-1/√k, 1/√k]^k` with side `2l`, `l = 1/(√k n^{1/k})`,
/// and `c_τ = c0 l²` so that the bump Hessian `c0 ∇²q` does not depend on
/// `l`. `c0` keeps every Hessian eigenvalue inside `[0.5, 1.5]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "HardRepr", into = "HardRepr")]
pub struct HardInstance {
    pub k: usize,
    pub n: usize,
    pub per_axis: usize,
    pub half_width: f64,
    pub c0: f64,
    /// `true` marks a type-2 cell; cells are ordered with axis 0 fastest.
    pub type_bits: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct HardRepr {
    k: usize,
    n: usize,
    c0: f64,
    type_bits: String,
}

impl From<HardInstance> for HardRepr {
    fn from(h: HardInstance) -> Self {
        HardRepr { k: h.k, n: h.n, c0: h.c0, type_bits: bits_to_hex(&h.type_bits) }
    }
}

impl TryFrom<HardRepr> for HardInstance {
    type Error = Error;
    fn try_from(r: HardRepr) -> Result<Self> {
        let per_axis = integer_root(r.n, r.k)?;
        let h = HardInstance {
            k: r.k,
            n: r.n,
            per_axis,
            half_width: half_width(r.k, per_axis),
            c0: r.c0,
            type_bits: hex_to_bits(&r.type_bits, r.n)?,
        };
        h.validate()?;
        Ok(h)
    }
}

fn half_width(k: usize, per_axis: usize) -> f64 {
    1.0 / ((k as f64).sqrt() * per_axis as f64)
}

fn integer_root(n: usize, k: usize) -> Result<usize> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("k/n", "must be positive"));
    }
    let guess = (n as f64).powf(1.0 / k as f64).round() as usize;
    for m in guess.saturating_sub(1)..=guess + 1 {
        if m.checked_pow(k as u32) == Some(n) {
            return Ok(m);
        }
    }
    Err(Error::invalid("n", format!("{n} is not a perfect {k}-th power")))
}

fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .map(|c| {
            let v = c.iter().enumerate().fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << (3 - i)));
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

fn hex_to_bits(s: &str, n: usize) -> Result<Vec<bool>> {
    if s.len() != n.div_ceil(4) {
        return Err(Error::invalid("type_bits", format!("expected {} hex digits", n.div_ceil(4))));
    }
    let mut bits = Vec::with_capacity(n);
    for ch in s.chars() {
        let v = ch.to_digit(16).ok_or_else(|| Error::invalid("type_bits", "not a hex string"))?;
        for i in 0..4 {
            bits.push(v & (1 << (3 - i)) != 0);
        }
    }
    if bits[n..].iter().any(|&b| b) {
        return Err(Error::invalid("type_bits", "padding bits must be zero"));
    }
    bits.truncate(n);
    Ok(bits)
}

/// `q(z) = Π cos²(π z_j / 2)` on `[-1, 1]^k`, zero outside.
pub fn bump(z: &[f64]) -> f64 {
    if z.iter().any(|v| v.abs() >= 1.0) {
        return 0.0;
    }
    z.iter().map(|v| (FRAC_PI_2 * v).cos().powi(2)).product()
}

fn bump_gradient(z: &[f64], out: &mut [f64]) {
    let factors: Vec<f64> = z.iter().map(|v| (FRAC_PI_2 * v).cos().powi(2)).collect();
    for j in 0..z.len() {
        let others: f64 = factors.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, f)| f).product();
        out[j] = -FRAC_PI_2 * (PI * z[j]).sin() * others;
    }
}

fn bump_hessian(z: &[f64]) -> DMatrix<f64> {
    let k = z.len();
    let c: Vec<f64> = z.iter().map(|v| (FRAC_PI_2 * v).cos().powi(2)).collect();
    let prod_except =
        |skip: &[usize]| -> f64 { c.iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, f)| f).product() };
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            -0.5 * PI * PI * (PI * z[i]).cos() * prod_except(&[i])
        } else {
            0.25 * PI * PI * (PI * z[i]).sin() * (PI * z[j]).sin() * prod_except(&[i, j])
        }
    })
}

/// Largest `|eigenvalue|` of `∇²q` over a grid on `[-1, 1]^k`.
fn bump_curvature(k: usize) -> f64 {
    let pts: usize = match k {
        1 => 201,
        2 => 81,
        3 => 25,
        _ => 11,
    };
    let total = pts.pow(k as u32);
    let mut z = vec![0.0; k];
    let mut worst = 0.0f64;
    for idx in 0..total {
        let mut r = idx;
        for zj in z.iter_mut() {
            *zj = -1.0 + 2.0 * (r % pts) as f64 / (pts - 1) as f64;
            r /= pts;
        }
        let eig = SymmetricEigen::new(bump_hessian(&z)).eigenvalues;
        worst = worst.max(eig.amax());
    }
    worst
}

impl HardInstance {
    /// Random instance with a `1/2 ± delta_frac` split of cell types.
    ///
    /// The cell order is a seeded permutation and the first `n₂` cells are
    /// type 2, so the two `type_choice` values give nested type-2 sets.
    pub fn generate<R: Rng + ?Sized>(
        k: usize,
        n: usize,
        delta_frac: f64,
        type_choice: TypeChoice,
        rng: &mut R,
    ) -> Result<Self> {
        let per_axis = integer_root(n, k)?;
        if !(0.0..0.5).contains(&delta_frac) {
            return Err(Error::invalid("delta_frac", "must lie in [0, 1/2)"));
        }
        let frac2 = match type_choice {
            TypeChoice::MajorityType1 => 0.5 - delta_frac,
            TypeChoice::MajorityType2 => 0.5 + delta_frac,
        };
        let n2 = (frac2 * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut type_bits = vec![false; n];
        for &c in &order[..n2] {
            type_bits[c] = true;
        }
        Ok(Self { k, n, per_axis, half_width: half_width(k, per_axis), c0: 0.95 * 0.5 / bump_curvature(k), type_bits })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = integer_root(self.n, self.k)?;
        if m != self.per_axis || self.type_bits.len() != self.n {
            return Err(Error::invalid("hard", "cell layout inconsistent"));
        }
        if !(self.c0 > 0.0 && self.c0 <= 0.5 / bump_curvature(self.k) + 1e-12) {
            return Err(Error::invalid("c0", "bump amplitude breaks the Hessian range"));
        }
        Ok(())
    }

    pub fn type2_count(&self) -> usize {
        self.type_bits.iter().filter(|&&b| b).count()
    }

    pub fn bump_amplitude(&self) -> f64 {
        self.c0 * self.half_width * self.half_width
    }

    pub fn with_type(&self, cell: usize, type2: bool) -> Self {
        let mut h = self.clone();
        h.type_bits[cell] = type2;
        h
    }

    /// Multi-index of cell `c` (axis 0 fastest).
    fn cell_index(&self, mut c: usize) -> Vec<usize> {
        (0..self.k)
            .map(|_| {
                let i = c % self.per_axis;
                c /= self.per_axis;
                i
            })
            .collect()
    }

    fn lower_edge(&self) -> f64 {
        -1.0 / (self.k as f64).sqrt()
    }

    pub fn cell_center(&self, c: usize) -> Vec<f64> {
        let lo = self.lower_edge();
        self.cell_index(c).into_iter().map(|i| lo + (2 * i + 1) as f64 * self.half_width).collect()
    }

    /// Cell containing `x`, if any.
    fn locate(&self, x: &[f64]) -> Option<usize> {
        let lo = self.lower_edge();
        let mut c = 0;
        let mut stride = 1;
        for &xi in x {
            let t = (xi - lo) / (2.0 * self.half_width);
            if !(0.0..=self.per_axis as f64).contains(&t) {
                return None;
            }
            let i = (t as usize).min(self.per_axis - 1);
            c += i * stride;
            stride *= self.per_axis;
        }
        Some(c)
    }

    /// Local bump coordinate for a type-2 cell containing `x`.
    fn local(&self, x: &[f64]) -> Option<Vec<f64>> {
        let c = self.locate(x)?;
        if !self.type_bits[c] {
            return None;
        }
        let v = self.cell_center(c);
        Some(x.iter().zip(&v).map(|(a, b)| (a - b) / self.half_width).collect())
    }

    pub(crate) fn dim(&self) -> usize {
        self.k
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        let base = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        match self.local(x) {
            Some(z) => base + self.bump_amplitude() * bump(&z),
            None => base,
        }
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        if let Some(z) = self.local(x) {
            if z.iter().all(|v| v.abs() < 1.0) {
                let mut gq = vec![0.0; self.k];
                bump_gradient(&z, &mut gq);
                let s = self.c0 * self.half_width;
                for (o, g) in out.iter_mut().zip(&gq) {
                    *o += s * g;
                }
            }
        }
    }

    pub(crate) fn smoothness(&self) -> f64 {
        1.5
    }

    pub(crate) fn convexity(&self) -> f64 {
        0.5
    }

    /// `∫_cell e^{-‖x‖²/2} (1 - e^{-c_τ q}) dx` for every cell, whatever its type.
    pub fn cell_deficits(&self, nodes: usize) -> Vec<f64> {
        let gl = GaussLegendre::new(nodes);
        let amp = self.bump_amplitude();
        let l = self.half_width;
        let pts = nodes.pow(self.k as u32);
        (0..self.n)
            .map(|c| {
                let v = self.cell_center(c);
                let mut total = 0.0;
                let mut z = vec![0.0; self.k];
                for idx in 0..pts {
                    let mut r = idx;
                    let mut w = 1.0;
                    for zj in z.iter_mut() {
                        *zj = gl.nodes[r % nodes];
                        w *= gl.weights[r % nodes];
                        r /= nodes;
                    }
                    let r2: f64 = z.iter().zip(&v).map(|(a, b)| (b + l * a).powi(2)).sum();
                    total += w * (-0.5 * r2).exp() * -(-amp * bump(&z)).exp_m1();
                }
                total * l.powi(self.k as i32)
            })
            .collect()
    }

    /// Partition function by per-cell Gauss–Legendre quadrature.
    pub fn partition_function(&self, nodes: usize) -> f64 {
        let deficits = self.cell_deficits(nodes);
        let lost: f64 = deficits.iter().zip(&self.type_bits).filter(|(_, &t)| t).map(|(d, _)| d).sum();
        self.gaussian_mass() - lost
    }

    /// `(2π)^{k/2}`, the partition function with no bumps.
    pub fn gaussian_mass(&self) -> f64 {
        (2.0 * PI).powf(self.k as f64 / 2.0)
    }

    /// `C` in `Z = (2π)^{k/2} - C n₂/n`, measured by quadrature.
    pub fn measured_deficit_constant(&self, nodes: usize) -> f64 {
        let n2 = self.type2_count();
        if n2 == 0 {
            return 0.0;
        }
        (self.gaussian_mass() - self.partition_function(nodes)) * self.n as f64 / n2 as f64
    }

    /// Analytic bound `n c0 l^{k+2}`: no single cell removes more than `1/n` of it.
    pub fn deficit_upper_constant(&self) -> f64 {
        self.n as f64 * self.c0 * self.half_width.powi(self.k as i32 + 2)
    }
}

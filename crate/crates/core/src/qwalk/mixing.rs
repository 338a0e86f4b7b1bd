use nalgebra::DMatrix;

use super::chain::DiscreteChain;
use crate::error::{Error, Result};

/// `max_x ½ Σ_y |M_xy − π_y|`.
pub fn worst_case_tv(m: &DMatrix<f64>, pi: &[f64]) -> f64 {
    (0..m.nrows())
        .map(|x| 0.5 * pi.iter().enumerate().map(|(y, p)| (m[(x, y)] - p).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest `t` with worst-case total variation `≤ eps` after `t` steps.
///
/// Uses repeated squaring and a binary descent; the worst-case distance is
/// nonincreasing in `t`.
pub fn mixing_time(chain: &DiscreteChain, eps: f64, max_log2: u32) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", "must lie in (0, 1)"));
    }
    let n = chain.len();
    if worst_case_tv(&DMatrix::identity(n, n), &chain.pi) <= eps {
        return Ok(0);
    }
    let mut powers = vec![chain.p.clone()];
    while worst_case_tv(powers.last().unwrap(), &chain.pi) > eps {
        if powers.len() > max_log2 as usize {
            return Err(Error::Degenerate(format!("not mixed after 2^{max_log2} steps")));
        }
        let last = powers.last().unwrap();
        powers.push(last * last);
    }
    if powers.len() == 1 {
        return Ok(1);
    }
    let k = powers.len() - 1;
    let mut current = powers[k - 1].clone();
    let mut t = 1u64 << (k - 1);
    for j in (0..k - 1).rev() {
        let cand = &current * &powers[j];
        if worst_case_tv(&cand, &chain.pi) > eps {
            current = cand;
            t += 1 << j;
        }
    }
    Ok(t + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lazy_two_state(a: f64) -> DiscreteChain {
        let p = DMatrix::from_row_slice(2, 2, &[1.0 - a, a, a, 1.0 - a]);
        DiscreteChain::new(vec![vec![0.0], vec![1.0]], p, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn matches_brute_force() {
        // Worst-case distance is ½|1 − 2a|^t.
        for &(a, eps) in &[(0.1, 0.01), (0.3, 0.001), (0.05, 0.2)] {
            let c = lazy_two_state(a);
            let t = mixing_time(&c, eps, 40).unwrap();
            let dist = |t: u64| 0.5 * (1.0f64 - 2.0 * a).abs().powi(t as i32);
            assert!(dist(t) <= eps && dist(t - 1) > eps, "a={a} t={t}");
        }
    }

    #[test]
    fn one_step_mixing() {
        assert_eq!(mixing_time(&lazy_two_state(0.5), 0.1, 10).unwrap(), 1);
    }
}

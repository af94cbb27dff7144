//! The classical layer: doubly summing matrices, forward and backward
//! evolution, matching distribution pairs and Bayesian inversion.
//!
//! Conditional matrices are column-stochastic: `forward[v][u] = p(v|u)` and
//! `backward[u][v] = p(u|v)`.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

pub const STOCHASTIC_TOL: f64 = 1e-12;

fn check_column_stochastic(m: &RealMatrix, tol: f64, what: &str) -> Result<()> {
    if let Some(v) = m.data().iter().find(|&&v| v < -tol) {
        return Err(Error::NegativeProbability(*v));
    }
    for (j, s) in m.col_sums().iter().enumerate() {
        if (s - 1.0).abs() > tol {
            return Err(Error::NotDoublySumming(format!("{what} column {j} sums to {s}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalChannel {
    forward: RealMatrix,
    backward: RealMatrix,
}

impl ClassicalChannel {
    /// `forward` is `N_v × N_u`, `backward` is `N_u × N_v`.
    pub fn new(forward: RealMatrix, backward: RealMatrix) -> Result<Self> {
        if forward.rows() != backward.cols() || forward.cols() != backward.rows() {
            return Err(Error::Shape("forward and backward matrices must be transposed shapes".into()));
        }
        check_column_stochastic(&forward, STOCHASTIC_TOL, "forward")?;
        check_column_stochastic(&backward, STOCHASTIC_TOL, "backward")?;
        Ok(ClassicalChannel { forward, backward })
    }

    /// Both conditionals of a joint table `joint[v][u]`.
    pub fn from_joint(joint: &RealMatrix) -> Result<Self> {
        let cols = joint.col_sums();
        let rows = joint.row_sums();
        if cols.iter().chain(&rows).any(|&s| s <= 0.0) {
            return Err(Error::Range("joint table has an empty row or column".into()));
        }
        let forward = RealMatrix::from_fn(joint.rows(), joint.cols(), |v, u| joint.get(v, u) / cols[u]);
        let backward = RealMatrix::from_fn(joint.cols(), joint.rows(), |u, v| joint.get(v, u) / rows[v]);
        Self::new(forward, backward)
    }

    pub fn forward(&self) -> &RealMatrix {
        &self.forward
    }

    pub fn backward(&self) -> &RealMatrix {
        &self.backward
    }

    pub fn n_u(&self) -> usize {
        self.forward.cols()
    }

    pub fn n_v(&self) -> usize {
        self.forward.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublySummingReport {
    /// Mean row sum.
    pub s_row: f64,
    /// Mean column sum.
    pub s_col: f64,
    pub is_doubly_summing: bool,
    /// Column sums equal one.
    pub normalized: bool,
    /// `|s_row/s_col − n_cols/n_rows|`.
    pub ratio_check: f64,
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

pub fn is_doubly_summing(m: &RealMatrix, tol: f64) -> DoublySummingReport {
    let rows = m.row_sums();
    let cols = m.col_sums();
    let s_row = rows.iter().sum::<f64>() / rows.len() as f64;
    let s_col = cols.iter().sum::<f64>() / cols.len() as f64;
    let is_doubly_summing = spread(&rows) <= tol && spread(&cols) <= tol;
    let ratio_check = if s_col != 0.0 {
        (s_row / s_col - m.cols() as f64 / m.rows() as f64).abs()
    } else {
        f64::INFINITY
    };
    DoublySummingReport {
        s_row,
        s_col,
        is_doubly_summing,
        normalized: cols.iter().all(|s| (s - 1.0).abs() <= tol),
        ratio_check,
    }
}

pub fn forward_evolve(p: &[f64], c: &ClassicalChannel) -> Result<Vec<f64>> {
    c.forward.mul_vec(p)
}

pub fn backward_evolve(p: &[f64], c: &ClassicalChannel) -> Result<Vec<f64>> {
    c.backward.mul_vec(p)
}

/// Distributions with `p_E(u) p(v|u) = p_F(v) p(u|v)` on every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingPair {
    pub p_e: Vec<f64>,
    pub p_f: Vec<f64>,
    /// Connected components of the support graph.
    pub components: usize,
    /// False when structural zeros leave the component weights free; the
    /// pair returned then weights components by their number of incomes.
    pub unique: bool,
}

/// Ratio propagation over the support graph (pairs where both conditionals
/// are nonzero), followed by a check of every equation.
pub fn matching_pair(c: &ClassicalChannel, tol: f64) -> Option<MatchingPair> {
    let (n_u, n_v) = (c.n_u(), c.n_v());
    let f = |u: usize, v: usize| c.forward.get(v, u);
    let b = |u: usize, v: usize| c.backward.get(u, v);
    // nodes 0..n_u are incomes, n_u.. are outcomes
    let n = n_u + n_v;
    let mut weight = vec![f64::NAN; n];
    let mut forced_zero = vec![false; n];
    for u in 0..n_u {
        for v in 0..n_v {
            match (f(u, v) > tol, b(u, v) > tol) {
                (true, false) => forced_zero[u] = true,
                (false, true) => forced_zero[n_u + v] = true,
                _ => {}
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut n_comp = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = n_comp;
        weight[start] = 1.0;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let nbrs: Vec<(usize, f64)> = if i < n_u {
                (0..n_v).filter(|&v| f(i, v) > tol && b(i, v) > tol).map(|v| (n_u + v, weight[i] * f(i, v) / b(i, v))).collect()
            } else {
                let v = i - n_u;
                (0..n_u).filter(|&u| f(u, v) > tol && b(u, v) > tol).map(|u| (u, weight[i] * b(u, v) / f(u, v))).collect()
            };
            for (j, w) in nbrs {
                if comp[j] == usize::MAX {
                    comp[j] = n_comp;
                    weight[j] = w;
                    queue.push_back(j);
                }
            }
        }
        n_comp += 1;
    }
    for k in 0..n_comp {
        if (0..n).any(|i| comp[i] == k && forced_zero[i]) {
            (0..n).filter(|&i| comp[i] == k).for_each(|i| weight[i] = 0.0);
        }
    }
    // normalize each live component to mass ∝ its number of incomes
    let live_incomes: usize = (0..n_u).filter(|&u| weight[u] > 0.0).count();
    if live_incomes == 0 {
        return None;
    }
    for k in 0..n_comp {
        let members: Vec<usize> = (0..n_u).filter(|&u| comp[u] == k && weight[u] > 0.0).collect();
        if members.is_empty() {
            (0..n).filter(|&i| comp[i] == k).for_each(|i| weight[i] = 0.0);
            continue;
        }
        let mass: f64 = members.iter().map(|&u| weight[u]).sum();
        let s = members.len() as f64 / live_incomes as f64 / mass;
        (0..n).filter(|&i| comp[i] == k).for_each(|i| weight[i] *= s);
    }
    let p_e = weight[..n_u].to_vec();
    let p_f = weight[n_u..].to_vec();
    let ok_sums = (p_e.iter().sum::<f64>() - 1.0).abs() <= tol.max(1e-12) && (p_f.iter().sum::<f64>() - 1.0).abs() <= tol.max(1e-9);
    let ok_eqs = (0..n_u).all(|u| (0..n_v).all(|v| (p_e[u] * f(u, v) - p_f[v] * b(u, v)).abs() <= tol.max(1e-12)));
    if !(ok_sums && ok_eqs) {
        return None;
    }
    let live_components = (0..n_comp).filter(|&k| (0..n_u).any(|u| comp[u] == k && weight[u] > 0.0)).count();
    Some(MatchingPair { p_e, p_f, components: n_comp, unique: live_components == 1 })
}

/// Backward conditionals of a doubly summing channel from its forward ones,
/// assuming flat marginals: `p(u|v) = (N_v/N_u) · p(v|u)`.
pub fn bayes_invert(p_fwd: &RealMatrix, n_u: usize, n_v: usize) -> Result<RealMatrix> {
    if p_fwd.rows() != n_v || p_fwd.cols() != n_u {
        return Err(Error::Shape(format!("expected {n_v}x{n_u}, got {}x{}", p_fwd.rows(), p_fwd.cols())));
    }
    let s = n_v as f64 / n_u as f64;
    let out = p_fwd.transpose().scale(s);
    check_column_stochastic(&out, 1e-10, "inverted")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spin() -> RealMatrix {
        RealMatrix::from_rows(&[vec![7.0 / 8.0, 1.0 / 8.0], vec![1.0 / 8.0, 7.0 / 8.0]]).unwrap()
    }

    #[test]
    fn spin_evolution() {
        let c = ClassicalChannel::new(spin(), spin()).unwrap();
        let p = forward_evolve(&[1.0, 0.0], &c).unwrap();
        assert!((p[0] - 7.0 / 8.0).abs() < 1e-15 && (p[1] - 1.0 / 8.0).abs() < 1e-15);
        let back = backward_evolve(&p, &c).unwrap();
        assert!((back[0] - 50.0 / 64.0).abs() < 1e-15 && (back[1] - 14.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn spin_is_doubly_summing() {
        let r = is_doubly_summing(&spin(), 1e-12);
        assert!(r.is_doubly_summing && r.normalized);
        assert!((r.s_row - 1.0).abs() < 1e-15 && (r.s_col - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ragged_rows_not_doubly_summing() {
        let m = RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(!is_doubly_summing(&m, 1e-12).is_doubly_summing);
    }

    #[test]
    fn flat_in_flat_out() {
        let c = ClassicalChannel::new(spin(), spin()).unwrap();
        assert_eq!(forward_evolve(&[0.5, 0.5], &c).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn spin_matching_pair_is_flat() {
        let c = ClassicalChannel::new(spin(), spin()).unwrap();
        let m = matching_pair(&c, 1e-12).unwrap();
        assert!(m.unique);
        for p in m.p_e.iter().chain(&m.p_f) {
            assert!((p - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn structural_zero_is_degenerate() {
        let id = RealMatrix::identity(2);
        let c = ClassicalChannel::new(id.clone(), id).unwrap();
        let m = matching_pair(&c, 1e-12).unwrap();
        assert_eq!(m.components, 2);
        assert!(!m.unique);
        assert_eq!(m.p_e, vec![0.5, 0.5]);
    }

    #[test]
    fn inconsistent_pair_is_none() {
        // forward insists u=0 → v=0, backward says v=0 never came from u=0
        let f = RealMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 0.5]]).unwrap();
        let b = RealMatrix::from_rows(&[vec![0.0, 0.5], vec![1.0, 0.5]]).unwrap();
        let c = ClassicalChannel::new(f, b).unwrap();
        assert!(matching_pair(&c, 1e-12).is_none());
    }

    #[test]
    fn bayes_spin_is_transpose() {
        let b = bayes_invert(&spin(), 2, 2).unwrap();
        assert!(b.max_abs_diff(&spin().transpose()) < 1e-15);
        assert!(bayes_invert(&RealMatrix::identity(3), 3, 3).unwrap().max_abs_diff(&RealMatrix::identity(3)) == 0.0);
    }

    #[test]
    fn bayes_two_to_four() {
        // each income spreads over its own pair of outcomes
        let f = RealMatrix::from_rows(&[
            vec![0.5, 0.0],
            vec![0.5, 0.0],
            vec![0.0, 0.25],
            vec![0.0, 0.75],
        ])
        .unwrap();
        assert!(bayes_invert(&f, 2, 4).is_err());
        let f = RealMatrix::from_rows(&[vec![0.3, 0.2], vec![0.2, 0.3], vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        let r = is_doubly_summing(&f, 1e-12);
        assert!(r.is_doubly_summing && r.ratio_check < 1e-15);
        let b = bayes_invert(&f, 2, 4).unwrap();
        for s in b.col_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

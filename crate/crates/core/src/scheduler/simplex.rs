//! Dense-tableau primal simplex over exact rationals with Bland's rule.
//!
//! Problems have the form `max c·x` subject to `A x <= b`, `x >= 0`, `b >= 0`,
//! so the slack basis is an initial feasible point and no phase one is needed.

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::num::Q;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("objective is unbounded")]
    Unbounded,
    #[error("constraint {0} has a negative right-hand side")]
    NegativeRhs(usize),
}

#[derive(Clone, Debug, Default)]
pub struct Lp {
    pub n_vars: usize,
    pub objective: Vec<Q>,
    /// Sparse rows `(coefficients, rhs)` of `<=` constraints.
    pub rows: Vec<(Vec<(usize, Q)>, Q)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LpSolution {
    pub values: Vec<Q>,
    pub objective: Q,
}

impl Lp {
    pub fn new(n_vars: usize) -> Self {
        Lp { n_vars, objective: vec![Q::zero(); n_vars], rows: Vec::new() }
    }

    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.objective.push(Q::zero());
        self.n_vars - 1
    }

    pub fn le(&mut self, coeffs: Vec<(usize, Q)>, rhs: Q) {
        self.rows.push((coeffs, rhs));
    }

    /// Equality with zero right-hand side, as two inequalities.
    pub fn eq_zero(&mut self, coeffs: Vec<(usize, Q)>) {
        let neg = coeffs.iter().map(|(j, v)| (*j, -v.clone())).collect();
        self.rows.push((coeffs, Q::zero()));
        self.rows.push((neg, Q::zero()));
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let m = self.rows.len();
        let n = self.n_vars;
        let width = n + m + 1;
        let mut t: Vec<Vec<Q>> = Vec::with_capacity(m + 1);
        for (i, (coeffs, rhs)) in self.rows.iter().enumerate() {
            if rhs.is_negative() {
                return Err(LpError::NegativeRhs(i));
            }
            let mut row = vec![Q::zero(); width];
            for (j, v) in coeffs {
                row[*j] += v;
            }
            row[n + i] = Q::from_integer(1.into());
            row[width - 1] = rhs.clone();
            t.push(row);
        }
        // reduced costs: z_j - c_j; entering columns have a negative entry
        let mut z = vec![Q::zero(); width];
        for (j, c) in self.objective.iter().enumerate() {
            z[j] = -c.clone();
        }
        t.push(z);
        let mut basis: Vec<usize> = (n..n + m).collect();

        loop {
            let Some(col) = (0..width - 1).find(|&j| t[m][j].is_negative()) else { break };
            let mut pick: Option<(usize, Q)> = None;
            for (i, row) in t.iter().enumerate().take(m) {
                if row[col].is_positive() {
                    let ratio = &row[width - 1] / &row[col];
                    let better = match &pick {
                        None => true,
                        Some((p, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*p]),
                    };
                    if better {
                        pick = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = pick else { return Err(LpError::Unbounded) };
            pivot(&mut t, r, col);
            basis[r] = col;
        }

        let mut values = vec![Q::zero(); n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                values[b] = t[i][width - 1].clone();
            }
        }
        let objective = t[m][width - 1].clone();
        Ok(LpSolution { values, objective })
    }
}

fn pivot(t: &mut [Vec<Q>], r: usize, c: usize) {
    let p = t[r][c].clone();
    for v in t[r].iter_mut() {
        if !v.is_zero() {
            *v /= &p;
        }
    }
    let prow = t[r].clone();
    let nz: Vec<usize> = (0..prow.len()).filter(|&j| !prow[j].is_zero()).collect();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r || row[c].is_zero() {
            continue;
        }
        let f = row[c].clone();
        for &j in &nz {
            let d = &f * &prow[j];
            row[j] -= d;
        }
    }
}

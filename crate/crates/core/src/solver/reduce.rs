//! Equality elimination: rewrites a program as
//! `min ½uᵀPu + cᵀu + c0  s.t.  Gu ≤ h, u ≥ 0` over the free variables `u`.

use super::dense::{dot, Mat};
use crate::program::ConvexProgram;

const PIVOT_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-8;

/// Where a reduced inequality row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// An inequality row of the program.
    Row(usize),
    /// Nonnegativity of an eliminated variable.
    Eliminated(usize),
}

#[derive(Clone, Debug)]
pub struct Reduced {
    pub n_full: usize,
    /// Full indices of the reduced variables.
    pub free: Vec<usize>,
    /// Full indices of eliminated variables; `v_basic = g − H u`.
    pub basic: Vec<usize>,
    pub h_mat: Mat,
    pub g: Vec<f64>,
    pub ineq: Mat,
    pub rhs: Vec<f64>,
    pub origin: Vec<Origin>,
    pub c: Vec<f64>,
    pub c0: f64,
    /// Hessian of the reduced objective (`½uᵀPu`), absent for LPs.
    pub p: Option<Mat>,
}

/// Why reduction failed.
#[derive(Clone, Debug, PartialEq)]
pub enum ReduceError {
    /// An equality row reduced to `0 = b` with `b ≠ 0`.
    InconsistentEquality(String),
    /// An inequality row reduced to `0 ≤ b` with `b < 0`.
    InconsistentInequality(String),
}

impl Reduced {
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_full];
        for (k, &j) in self.free.iter().enumerate() {
            v[j] = u[k];
        }
        for (r, &b) in self.basic.iter().enumerate() {
            v[b] = self.g[r] - dot(self.h_mat.row(r), u);
        }
        v
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let mut obj = self.c0 + dot(&self.c, u);
        if let Some(p) = &self.p {
            obj += 0.5 * dot(u, &p.mul_vec(u));
        }
        obj
    }

    pub fn max_violation(&self, u: &[f64]) -> f64 {
        let mut worst = u.iter().fold(0.0f64, |m, &x| m.max(-x));
        for r in 0..self.ineq.rows {
            worst = worst.max(dot(self.ineq.row(r), u) - self.rhs[r]);
        }
        worst
    }
}

pub fn reduce(program: &ConvexProgram) -> Result<Reduced, ReduceError> {
    let n = program.len();
    let rows = program.equalities.len();
    let mut e = Mat::zeros(rows, n);
    let mut b = vec![0.0; rows];
    let mut occurrences = vec![0usize; n];
    for (r, row) in program.equalities.iter().enumerate() {
        let norm = row.coefs.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        for &(k, c) in &row.coefs {
            e[(r, k)] += c * scale;
            occurrences[k] += 1;
        }
        b[r] = row.rhs * scale;
    }

    let mut is_basic = vec![false; n];
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut nz: Vec<usize> = Vec::with_capacity(n);
    for r in 0..rows {
        let mut best: Option<(usize, f64)> = None;
        for (c, &a) in e.row(r).iter().enumerate() {
            if is_basic[c] || a.abs() <= PIVOT_TOL {
                continue;
            }
            let a = a.abs();
            best = match best {
                None => Some((c, a)),
                Some((bc, ba)) => {
                    let better = a > ba * (1.0 + 1e-12)
                        || (a >= ba * (1.0 - 1e-12) && occurrences[c] < occurrences[bc]);
                    if better { Some((c, a)) } else { Some((bc, ba)) }
                }
            };
        }
        let Some((p, _)) = best else {
            if b[r].abs() > CONSISTENCY_TOL {
                return Err(ReduceError::InconsistentEquality(program.equalities[r].label.clone()));
            }
            continue;
        };
        let inv = 1.0 / e[(r, p)];
        for v in e.row_mut(r) {
            *v *= inv;
        }
        b[r] *= inv;
        e[(r, p)] = 1.0;
        nz.clear();
        nz.extend(e.row(r).iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(c, _)| c));
        let pivot_row: Vec<(usize, f64)> = nz.iter().map(|&c| (c, e[(r, c)])).collect();
        for other in 0..rows {
            if other == r {
                continue;
            }
            let factor = e[(other, p)];
            if factor == 0.0 {
                continue;
            }
            let row = e.row_mut(other);
            for &(c, v) in &pivot_row {
                row[c] -= factor * v;
            }
            row[p] = 0.0;
            b[other] -= factor * b[r];
        }
        is_basic[p] = true;
        pivots.push((r, p));
    }

    let free: Vec<usize> = (0..n).filter(|&c| !is_basic[c]).collect();
    let nf = free.len();
    let mut h_mat = Mat::zeros(pivots.len(), nf);
    let mut g = Vec::with_capacity(pivots.len());
    let mut basic = Vec::with_capacity(pivots.len());
    for (k, &(r, p)) in pivots.iter().enumerate() {
        for (j, &c) in free.iter().enumerate() {
            h_mat[(k, j)] = e[(r, c)];
        }
        g.push(b[r]);
        basic.push(p);
    }
    let mut basic_pos = vec![usize::MAX; n];
    for (k, &p) in basic.iter().enumerate() {
        basic_pos[p] = k;
    }
    let mut free_pos = vec![usize::MAX; n];
    for (k, &c) in free.iter().enumerate() {
        free_pos[c] = k;
    }

    let mut ineq_rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut origin = Vec::new();
    let mut push = |coefs: Vec<f64>, h: f64, o: Origin, label: &str| -> Result<(), ReduceError> {
        let scale = coefs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= PIVOT_TOL {
            if h < -CONSISTENCY_TOL {
                return Err(ReduceError::InconsistentInequality(label.to_string()));
            }
            return Ok(());
        }
        // A row with no positive coefficient and nonnegative bound holds for all u ≥ 0.
        if h >= 0.0 && coefs.iter().all(|&v| v <= PIVOT_TOL * scale) {
            return Ok(());
        }
        ineq_rows.push(coefs.iter().map(|v| v / scale).collect());
        rhs.push(h / scale);
        origin.push(o);
        Ok(())
    };
    for (k, &p) in basic.iter().enumerate() {
        push(h_mat.row(k).to_vec(), g[k], Origin::Eliminated(p), &format!("nonnegativity of variable {p}"))?;
    }
    for (r, row) in program.inequalities.iter().enumerate() {
        let mut coefs = vec![0.0; nf];
        let mut h = row.rhs;
        for &(c, a) in &row.coefs {
            if is_basic[c] {
                let k = basic_pos[c];
                h -= a * g[k];
                for (j, &v) in h_mat.row(k).iter().enumerate() {
                    coefs[j] -= a * v;
                }
            } else {
                coefs[free_pos[c]] += a;
            }
        }
        push(coefs, h, Origin::Row(r), &row.label)?;
    }
    let mut ineq = Mat::zeros(ineq_rows.len(), nf);
    for (r, row) in ineq_rows.iter().enumerate() {
        ineq.row_mut(r).copy_from_slice(row);
    }

    let mut c = vec![0.0; nf];
    let mut c0 = 0.0;
    for (j, &col) in free.iter().enumerate() {
        c[j] = program.linear[col];
    }
    for (k, &p) in basic.iter().enumerate() {
        let cp = program.linear[p];
        if cp != 0.0 {
            c0 += cp * g[k];
            for (j, &v) in h_mat.row(k).iter().enumerate() {
                c[j] -= cp * v;
            }
        }
    }
    let p = if program.is_linear() {
        None
    } else {
        let mut pm = Mat::zeros(nf, nf);
        for (j, &col) in free.iter().enumerate() {
            pm[(j, j)] += 2.0 * program.quadratic[col];
        }
        for (k, &bcol) in basic.iter().enumerate() {
            let q = program.quadratic[bcol];
            if q == 0.0 {
                continue;
            }
            let h = h_mat.row(k);
            let gk = g[k];
            c0 += q * gk * gk;
            for (i, &hi) in h.iter().enumerate() {
                if hi == 0.0 {
                    continue;
                }
                c[i] -= 2.0 * q * gk * hi;
                let prow = pm.row_mut(i);
                for (j, &hj) in h.iter().enumerate() {
                    prow[j] += 2.0 * q * hi * hj;
                }
            }
        }
        Some(pm)
    };

    Ok(Reduced { n_full: n, free, basic, h_mat, g, ineq, rhs, origin, c, c0, p })
}

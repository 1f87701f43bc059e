//! Two-phase simplex on a condensed tableau for `min cᵀu s.t. Gu ≤ h, u ≥ 0`.
//!
//! Each row holds a basic variable `β_r = h_r − Σ_j a_rj ν_j` in terms of the
//! nonbasic variables `ν`. Labels `0..n` are structural variables and
//! `n..n+m` are row slacks; label `n+m` is the phase-one auxiliary variable.

use super::dense::{dot, Mat};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
/// Degenerate pivots tolerated under Dantzig's rule before switching to Bland's.
pub const DEGENERATE_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal {
        u: Vec<f64>,
        /// Row multipliers `y ≥ 0` with `c + Gᵀy ≥ 0`.
        duals: Vec<f64>,
    },
    Infeasible {
        /// `y ≥ 0` with `yᵀG ≥ 0` and `yᵀh < 0`.
        farkas: Vec<f64>,
    },
    Unbounded,
    IterationLimit {
        u: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct LpReport {
    pub outcome: LpOutcome,
    pub iterations: usize,
    pub degenerate_pivots: usize,
    pub used_bland: bool,
}

struct Tableau {
    m: usize,
    /// Columns: one per nonbasic slot.
    cols: usize,
    a: Mat,
    h: Vec<f64>,
    d: Vec<f64>,
    obj: f64,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, s: usize) {
        let cols = self.cols;
        let p = self.a[(r, s)];
        let inv = 1.0 / p;
        {
            let row = self.a.row_mut(r);
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[s] = inv;
        }
        self.h[r] *= inv;
        let pivot_row: Vec<f64> = self.a.row(r).to_vec();
        let hr = self.h[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[(i, s)];
            if f == 0.0 {
                continue;
            }
            let row = self.a.row_mut(i);
            for j in 0..cols {
                row[j] -= f * pivot_row[j];
            }
            row[s] = -f * inv;
            self.h[i] -= f * hr;
            if self.h[i].abs() < 1e-13 {
                self.h[i] = 0.0;
            }
        }
        let ds = self.d[s];
        if ds != 0.0 {
            for j in 0..cols {
                self.d[j] -= ds * pivot_row[j];
            }
            self.d[s] = -ds * inv;
            self.obj += ds * hr;
        }
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[s]);
    }

    /// Runs simplex iterations on the current objective row.
    fn optimize(&mut self, stats: &mut Stats, max_iter: usize, skip_label: Option<usize>) -> Phase {
        loop {
            if stats.iterations >= max_iter {
                return Phase::Limit;
            }
            let bland = stats.degenerate >= DEGENERATE_LIMIT;
            stats.used_bland |= bland;
            let mut enter: Option<usize> = None;
            for j in 0..self.cols {
                if Some(self.nonbasic[j]) == skip_label || self.d[j] >= -COST_TOL {
                    continue;
                }
                enter = match enter {
                    None => Some(j),
                    Some(b) => {
                        let better = if bland {
                            self.nonbasic[j] < self.nonbasic[b]
                        } else {
                            self.d[j] < self.d[b]
                        };
                        if better { Some(j) } else { Some(b) }
                    }
                };
            }
            let Some(s) = enter else {
                return Phase::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.a[(i, s)];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.h[i].max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let better = ratio < br - 1e-12
                            || (ratio <= br + 1e-12 && self.basic[i] < self.basic[bi]);
                        if better { Some((i, ratio)) } else { Some((bi, br)) }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return Phase::Unbounded;
            };
            if ratio <= 1e-12 {
                stats.degenerate += 1;
            }
            self.pivot(r, s);
            stats.iterations += 1;
        }
    }
}

enum Phase {
    Optimal,
    Unbounded,
    Limit,
}

#[derive(Default)]
struct Stats {
    iterations: usize,
    degenerate: usize,
    used_bland: bool,
}

/// Solves `min cᵀu s.t. Gu ≤ h, u ≥ 0`.
pub fn solve_lp(c: &[f64], g: &Mat, h: &[f64], max_iter: usize) -> LpReport {
    let (m, n) = (g.rows, g.cols);
    let needs_phase_one = h.iter().any(|&v| v < 0.0);
    let cols = n + usize::from(needs_phase_one);
    let aux = n + m;
    let mut a = Mat::zeros(m, cols);
    for r in 0..m {
        a.row_mut(r)[..n].copy_from_slice(g.row(r));
        if needs_phase_one {
            a[(r, n)] = -1.0;
        }
    }
    let mut t = Tableau {
        m,
        cols,
        a,
        h: h.to_vec(),
        d: vec![0.0; cols],
        obj: 0.0,
        basic: (n..n + m).collect(),
        nonbasic: (0..n).chain(needs_phase_one.then_some(aux)).collect(),
    };
    let mut stats = Stats::default();

    if needs_phase_one {
        // Phase one: minimize the auxiliary variable.
        t.d[n] = 1.0;
        let r = (0..m).fold(0, |b, i| if t.h[i] < t.h[b] { i } else { b });
        t.pivot(r, n);
        match t.optimize(&mut stats, max_iter, None) {
            Phase::Optimal => {}
            Phase::Unbounded | Phase::Limit => {
                return report(LpOutcome::IterationLimit { u: vec![0.0; n] }, stats);
            }
        }
        if t.obj > 1e-9 * (1.0 + norm(h)) {
            let mut farkas = vec![0.0; m];
            for (j, &label) in t.nonbasic.iter().enumerate() {
                if label >= n && label < n + m {
                    farkas[label - n] = t.d[j].max(0.0);
                }
            }
            return report(LpOutcome::Infeasible { farkas }, stats);
        }
        // Drive the auxiliary variable out of the basis if it is still there.
        if let Some(r) = t.basic.iter().position(|&l| l == aux) {
            let s = (0..t.cols)
                .filter(|&j| t.a[(r, j)].abs() > PIVOT_TOL)
                .max_by(|&x, &y| t.a[(r, x)].abs().total_cmp(&t.a[(r, y)].abs()));
            if let Some(s) = s {
                t.pivot(r, s);
            }
        }
        // Remove the auxiliary column from the objective by zeroing its entries.
        if let Some(j) = t.nonbasic.iter().position(|&l| l == aux) {
            for i in 0..m {
                t.a[(i, j)] = 0.0;
            }
        }
    }

    // Phase two objective expressed in the current nonbasic variables.
    t.d = vec![0.0; t.cols];
    t.obj = 0.0;
    for (j, &label) in t.nonbasic.iter().enumerate() {
        if label < n {
            t.d[j] = c[label];
        }
    }
    for (i, &label) in t.basic.iter().enumerate() {
        if label < n && c[label] != 0.0 {
            let ci = c[label];
            t.obj += ci * t.h[i];
            for j in 0..t.cols {
                t.d[j] -= ci * t.a[(i, j)];
            }
        }
    }
    let aux_slot = t.nonbasic.iter().position(|&l| l == aux);
    if let Some(j) = aux_slot {
        t.d[j] = 0.0;
    }
    let phase = t.optimize(&mut stats, max_iter, Some(aux));
    let mut u = vec![0.0; n];
    for (i, &label) in t.basic.iter().enumerate() {
        if label < n {
            u[label] = t.h[i].max(0.0);
        }
    }
    match phase {
        Phase::Unbounded => report(LpOutcome::Unbounded, stats),
        Phase::Limit => report(LpOutcome::IterationLimit { u }, stats),
        Phase::Optimal => {
            let mut duals = vec![0.0; m];
            for (j, &label) in t.nonbasic.iter().enumerate() {
                if label >= n && label < n + m {
                    duals[label - n] = t.d[j].max(0.0);
                }
            }
            report(LpOutcome::Optimal { u, duals }, stats)
        }
    }
}

fn norm(h: &[f64]) -> f64 {
    h.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn report(outcome: LpOutcome, s: Stats) -> LpReport {
    LpReport { outcome, iterations: s.iterations, degenerate_pivots: s.degenerate, used_bland: s.used_bland }
}

/// Dual objective `−hᵀy` of the problem at multipliers `y`.
pub fn dual_objective(h: &[f64], y: &[f64]) -> f64 {
    -dot(h, y)
}

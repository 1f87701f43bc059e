//! LP/QP solvers for the relaxation programs.
//!
//! Every program is first reduced by eliminating its equality rows. LPs go
//! through a dense two-phase simplex, convex QPs through ADMM with polishing.
//! LPs whose size makes a dense tableau impractical fall back to a sparse
//! revised simplex. All results are re-checked against the original rows.

pub mod admm;
pub mod dense;
pub mod oracle;
pub mod reduce;
pub mod simplex;
pub mod sparse;

use std::fmt;

use crate::error::{Error, Result};
use crate::program::{ConvexProgram, Row};
use admm::{AdmmSettings, solve_qp};
use dense::norm_inf;
use reduce::{reduce, Origin, ReduceError, Reduced};
use simplex::{LpOutcome, solve_lp};

pub const LP_PRIMAL_TOL: f64 = 1e-8;
pub const QP_PRIMAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    DenseSimplex,
    SparseSimplex,
    Admm,
    Oracle,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// Max violation of the program's rows and bounds.
    pub primal: f64,
    /// Max violation of dual feasibility (stationarity for QPs).
    pub dual: f64,
    pub complementarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    pub residuals: Residuals,
    pub iterations: usize,
    pub backend: Backend,
    /// Dual objective reconstructed from the final simplex basis.
    pub dual_objective: Option<f64>,
    /// For infeasible LPs: nonnegative multipliers on named constraints
    /// whose combination yields `0 ≤ negative`.
    pub certificate: Option<Vec<(String, f64)>>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub lp_max_iter: usize,
    pub admm: AdmmSettings,
    /// Programs with more variables than this use the sparse LP backend.
    pub dense_limit: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { lp_max_iter: 200_000, admm: AdmmSettings::default(), dense_limit: 4000 }
    }
}

pub fn solve(program: &ConvexProgram) -> Result<Solution> {
    solve_with(program, &SolveOptions::default())
}

pub fn solve_with(program: &ConvexProgram, opts: &SolveOptions) -> Result<Solution> {
    if program.is_linear() && program.len() > opts.dense_limit {
        return Ok(solve_sparse_lp(program));
    }
    if !program.is_linear() && program.len() > opts.dense_limit {
        return Err(Error::Solver(format!("QP with {} variables exceeds the dense limit", program.len())));
    }
    let red = match reduce(program) {
        Ok(r) => r,
        Err(e) => return Ok(infeasible_from_reduction(program, e)),
    };
    if program.is_linear() {
        Ok(solve_reduced_lp(program, &red, opts))
    } else {
        Ok(solve_reduced_qp(program, &red, opts))
    }
}

fn infeasible_from_reduction(program: &ConvexProgram, e: ReduceError) -> Solution {
    let label = match e {
        ReduceError::InconsistentEquality(l) | ReduceError::InconsistentInequality(l) => l,
    };
    Solution {
        values: vec![0.0; program.len()],
        objective: f64::NAN,
        status: Status::Infeasible,
        residuals: Residuals::default(),
        iterations: 0,
        backend: Backend::DenseSimplex,
        dual_objective: None,
        certificate: Some(vec![(label, 1.0)]),
    }
}

fn origin_label(program: &ConvexProgram, o: Origin) -> String {
    match o {
        Origin::Row(r) => program.inequalities[r].label.clone(),
        Origin::Eliminated(k) => format!("{} >= 0", program.var_name(k)),
    }
}

fn solve_reduced_lp(program: &ConvexProgram, red: &Reduced, opts: &SolveOptions) -> Solution {
    let rep = solve_lp(&red.c, &red.ineq, &red.rhs, opts.lp_max_iter);
    let base = |values: Vec<f64>, status: Status| Solution {
        objective: program.objective(&values),
        residuals: Residuals { primal: program.feasibility(&values).max(), dual: 0.0, complementarity: 0.0 },
        values,
        status,
        iterations: rep.iterations,
        backend: Backend::DenseSimplex,
        dual_objective: None,
        certificate: None,
    };
    match rep.outcome {
        LpOutcome::Optimal { u, duals } => {
            let mut sol = base(red.expand(&u), Status::Optimal);
            let gty = red.ineq.tmul_vec(&duals);
            let dual_infeas = red
                .c
                .iter()
                .zip(&gty)
                .map(|(c, g)| (-(c + g)).max(0.0))
                .fold(0.0, f64::max);
            let gu = red.ineq.mul_vec(&u);
            let comp = duals
                .iter()
                .zip(gu.iter().zip(&red.rhs))
                .map(|(y, (a, b))| y * (b - a).abs())
                .sum::<f64>()
                + u.iter().zip(red.c.iter().zip(&gty)).map(|(x, (c, g))| x * (c + g).abs()).sum::<f64>();
            sol.residuals.dual = dual_infeas;
            sol.residuals.complementarity = comp;
            sol.dual_objective = Some(red.c0 + simplex::dual_objective(&red.rhs, &duals));
            if sol.residuals.primal > LP_PRIMAL_TOL {
                sol.status = Status::IterationLimit;
            }
            sol
        }
        LpOutcome::Infeasible { farkas } => {
            let mut sol = base(vec![0.0; program.len()], Status::Infeasible);
            sol.objective = f64::NAN;
            sol.certificate = Some(
                farkas
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y > 0.0)
                    .map(|(r, &y)| (origin_label(program, red.origin[r]), y))
                    .collect(),
            );
            sol
        }
        LpOutcome::Unbounded => {
            let mut sol = base(vec![0.0; program.len()], Status::Unbounded);
            sol.objective = f64::NEG_INFINITY;
            sol
        }
        LpOutcome::IterationLimit { u } => base(red.expand(&u), Status::IterationLimit),
    }
}

fn solve_reduced_qp(program: &ConvexProgram, red: &Reduced, opts: &SolveOptions) -> Solution {
    let p = red.p.as_ref().expect("quadratic program has a Hessian");
    // Cost scaling keeps ADMM's step heuristic in a sensible range.
    let scale = norm_inf(&p.data).max(norm_inf(&red.c)).max(1.0);
    let mut ps = p.clone();
    ps.data.iter_mut().for_each(|v| *v /= scale);
    let cs: Vec<f64> = red.c.iter().map(|v| v / scale).collect();
    let res = solve_qp(&ps, &cs, &red.ineq, &red.rhs, &opts.admm);
    let values = red.expand(&res.u);
    let primal = program.feasibility(&values).max();
    let gu = red.ineq.mul_vec(&res.u);
    let comp = res
        .y_rows
        .iter()
        .zip(gu.iter().zip(&red.rhs))
        .map(|(y, (a, b))| y.abs() * (b - a).abs())
        .sum::<f64>()
        * scale;
    let status = if res.converged && primal <= QP_PRIMAL_TOL {
        Status::Optimal
    } else {
        Status::IterationLimit
    };
    Solution {
        objective: program.objective(&values),
        values,
        status,
        residuals: Residuals { primal, dual: res.dual_residual * scale, complementarity: comp },
        iterations: res.iterations,
        backend: Backend::Admm,
        dual_objective: None,
        certificate: None,
    }
}

fn solve_sparse_lp(program: &ConvexProgram) -> Solution {
    let (values, status) = match sparse::solve_sparse(program) {
        sparse::SparseOutcome::Optimal(v) => (v, Status::Optimal),
        sparse::SparseOutcome::Infeasible => (vec![0.0; program.len()], Status::Infeasible),
        sparse::SparseOutcome::Unbounded => (vec![0.0; program.len()], Status::Unbounded),
    };
    let primal = program.feasibility(&values).max();
    let status = if status == Status::Optimal && primal > LP_PRIMAL_TOL {
        Status::IterationLimit
    } else {
        status
    };
    Solution {
        objective: if status == Status::Infeasible { f64::NAN } else { program.objective(&values) },
        values,
        status,
        residuals: Residuals { primal, dual: 0.0, complementarity: 0.0 },
        iterations: 0,
        backend: Backend::SparseSimplex,
        dual_objective: None,
        certificate: None,
    }
}

/// Reference optimum by exhaustive search; requires at most
/// [`oracle::MAX_ORACLE_DIM`] variables after equality elimination.
pub fn brute_force_oracle(program: &ConvexProgram, grid_resolution: usize) -> Result<Solution> {
    let red = match reduce(program) {
        Ok(r) => r,
        Err(e) => {
            let mut s = infeasible_from_reduction(program, e);
            s.backend = Backend::Oracle;
            return Ok(s);
        }
    };
    let u = match oracle::minimize(&red, grid_resolution) {
        Ok(u) => u,
        Err(oracle::OracleError::Infeasible) => {
            let mut s = infeasible_from_reduction(program, ReduceError::InconsistentInequality("empty polytope".into()));
            s.backend = Backend::Oracle;
            s.certificate = None;
            return Ok(s);
        }
        Err(e) => return Err(Error::Solver(format!("oracle rejected instance: {e:?}"))),
    };
    let values = red.expand(&u);
    Ok(Solution {
        objective: program.objective(&values),
        residuals: Residuals { primal: program.feasibility(&values).max(), dual: 0.0, complementarity: 0.0 },
        values,
        status: Status::Optimal,
        iterations: 0,
        backend: Backend::Oracle,
        dual_objective: None,
        certificate: None,
    })
}

/// Dimension of the program after equality elimination.
pub fn reduced_dimension(program: &ConvexProgram) -> Option<usize> {
    reduce(program).ok().map(|r| r.dim())
}

/// Among optimal points of `program`, minimizes the linear `secondary`
/// objective. Used to pick a canonical optimum on degenerate LPs.
pub fn solve_lexicographic(program: &ConvexProgram, secondary: &[f64]) -> Result<Solution> {
    let first = solve(program)?;
    if !first.is_optimal() || !program.is_linear() {
        return Ok(first);
    }
    let mut second = program.clone();
    let slack = 1e-9 * (1.0 + first.objective.abs());
    second.inequalities.push(Row {
        coefs: program.linear.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(k, &c)| (k, c)).collect(),
        rhs: first.objective + slack,
        label: "optimal_cost".into(),
    });
    second.linear = secondary.to_vec();
    let mut sol = solve(&second)?;
    if sol.is_optimal() {
        sol.objective = program.objective(&sol.values);
        sol.residuals.primal = program.feasibility(&sol.values).max();
        sol.dual_objective = None;
    }
    Ok(sol)
}

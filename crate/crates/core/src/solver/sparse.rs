//! Sparse revised-simplex backend for LPs too large for the dense tableau.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::program::ConvexProgram;

pub enum SparseOutcome {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

pub fn solve_sparse(program: &ConvexProgram) -> SparseOutcome {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = program
        .linear
        .iter()
        .map(|&c| lp.add_var(c, (0.0, f64::INFINITY)))
        .collect();
    let add = |lp: &mut Problem, row: &crate::program::Row, op: ComparisonOp| {
        let expr: Vec<_> = row.coefs.iter().map(|&(k, c)| (vars[k], c)).collect();
        lp.add_constraint(expr, op, row.rhs);
    };
    for row in &program.equalities {
        add(&mut lp, row, ComparisonOp::Eq);
    }
    for row in &program.inequalities {
        add(&mut lp, row, ComparisonOp::Le);
    }
    match lp.solve() {
        Ok(sol) => SparseOutcome::Optimal(vars.iter().map(|&v| sol[v].max(0.0)).collect()),
        Err(minilp::Error::Infeasible) => SparseOutcome::Infeasible,
        Err(minilp::Error::Unbounded) => SparseOutcome::Unbounded,
    }
}

//! Exhaustive reference solver for tiny programs: vertex enumeration for LPs,
//! face enumeration for QPs (refined grid search when there are too many faces).

use super::dense::{dot, Lu, Mat};
use super::reduce::Reduced;

pub const MAX_ORACLE_DIM: usize = 12;
const MAX_COMBINATIONS: u64 = 20_000_000;
const FEAS_TOL: f64 = 1e-9;
const GRID_BUDGET: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum OracleError {
    TooLarge { dim: usize },
    TooManyCombinations(u64),
    Infeasible,
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    r
}

/// Constraint `a·u ≤ b` set including the `−u ≤ 0` bounds.
fn all_constraints(red: &Reduced) -> Vec<(Vec<f64>, f64)> {
    let n = red.dim();
    let mut out: Vec<(Vec<f64>, f64)> = (0..red.ineq.rows).map(|r| (red.ineq.row(r).to_vec(), red.rhs[r])).collect();
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = -1.0;
        out.push((a, 0.0));
    }
    out
}

fn feasible(cons: &[(Vec<f64>, f64)], u: &[f64], tol: f64) -> bool {
    cons.iter().all(|(a, b)| dot(a, u) <= b + tol * (1.0 + b.abs()))
}

/// All vertices of the reduced feasible polytope.
pub fn vertices(red: &Reduced) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = red.dim();
    if n > MAX_ORACLE_DIM {
        return Err(OracleError::TooLarge { dim: n });
    }
    let cons = all_constraints(red);
    if n == 0 {
        return if feasible(&cons, &[], FEAS_TOL) { Ok(vec![vec![]]) } else { Err(OracleError::Infeasible) };
    }
    let total = binomial(cons.len(), n);
    if total > MAX_COMBINATIONS {
        return Err(OracleError::TooManyCombinations(total));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let mut a = Mat::zeros(n, n);
        let mut b = vec![0.0; n];
        for (r, &k) in pick.iter().enumerate() {
            a.row_mut(r).copy_from_slice(&cons[k].0);
            b[r] = cons[k].1;
        }
        if let Some(lu) = Lu::new(&a) {
            let u = lu.solve(&b);
            let residual = (0..n).map(|r| (dot(a.row(r), &u) - b[r]).abs()).fold(0.0, f64::max);
            if u.iter().all(|v| v.is_finite())
                && residual < 1e-9 * (1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                && feasible(&cons, &u, FEAS_TOL)
                && !out.iter().any(|w| w.iter().zip(&u).all(|(p, q)| (p - q).abs() < 1e-9))
            {
                out.push(u);
            }
        }
        if !next_combination(&mut pick, cons.len()) {
            return if out.is_empty() { Err(OracleError::Infeasible) } else { Ok(out) };
        }
    }
}

/// Advances `pick` to the next `k`-subset of `0..m` in lexicographic order.
fn next_combination(pick: &mut [usize], m: usize) -> bool {
    let k = pick.len();
    let mut i = k;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if pick[i] < m - k + i {
            break;
        }
    }
    pick[i] += 1;
    for j in i + 1..k {
        pick[j] = pick[j - 1] + 1;
    }
    true
}

/// Best feasible point among the minimizers of the quadratic over the affine
/// hull of every face. A convex QP attains its minimum in the relative
/// interior of some face, and there it is the unique minimizer over that
/// face's hull whenever the KKT system is nonsingular; singular faces can be
/// skipped because a minimizer then also exists on a smaller face.
fn minimize_over_faces(red: &Reduced, p: &Mat, cons: &[(Vec<f64>, f64)], best: &mut Vec<f64>, best_obj: &mut f64) {
    let n = red.dim();
    for k in 0..=n.min(cons.len()) {
        let mut pick: Vec<usize> = (0..k).collect();
        loop {
            let size = n + k;
            let mut kkt = Mat::zeros(size, size);
            let mut rhs = vec![0.0; size];
            for i in 0..n {
                kkt.row_mut(i)[..n].copy_from_slice(p.row(i));
                rhs[i] = -red.c[i];
            }
            for (r, &j) in pick.iter().enumerate() {
                let (a, b) = &cons[j];
                kkt.row_mut(n + r)[..n].copy_from_slice(a);
                for (i, &v) in a.iter().enumerate() {
                    kkt[(i, n + r)] = v;
                }
                rhs[n + r] = *b;
            }
            if let Some(lu) = Lu::new(&kkt) {
                let sol = lu.solve(&rhs);
                let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let residual = kkt.mul_vec(&sol).iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let u = &sol[..n];
                if u.iter().all(|v| v.is_finite()) && residual <= 1e-9 * scale && feasible(cons, u, FEAS_TOL) {
                    let o = red.objective(u);
                    if o < *best_obj {
                        *best_obj = o;
                        *best = u.to_vec();
                    }
                }
            }
            if k == 0 || !next_combination(&mut pick, cons.len()) {
                break;
            }
        }
    }
}

/// Minimizes the reduced objective. LPs use the best vertex; QPs enumerate
/// faces, or search a grid over the vertex bounding box (refined twice around
/// the incumbent) when the face count exceeds the budget.
pub fn minimize(red: &Reduced, grid_resolution: usize) -> Result<Vec<f64>, OracleError> {
    let verts = vertices(red)?;
    let mut best = verts[0].clone();
    let mut best_obj = red.objective(&best);
    for v in &verts[1..] {
        let o = red.objective(v);
        if o < best_obj {
            best_obj = o;
            best = v.clone();
        }
    }
    let Some(p) = red.p.as_ref().filter(|_| red.dim() > 0) else {
        return Ok(best);
    };
    let n = red.dim();
    let cons = all_constraints(red);
    let faces: u64 = (0..=n.min(cons.len())).map(|k| binomial(cons.len(), k)).fold(0, u64::saturating_add);
    if faces <= MAX_COMBINATIONS {
        minimize_over_faces(red, p, &cons, &mut best, &mut best_obj);
        return Ok(best);
    }
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for v in &verts {
        for i in 0..n {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    let budget = (GRID_BUDGET as f64).powf(1.0 / n as f64).floor() as usize;
    let k = grid_resolution.min(budget).max(2);
    for _level in 0..3 {
        let step: Vec<f64> = (0..n).map(|i| (hi[i] - lo[i]) / (k - 1) as f64).collect();
        let mut idx = vec![0usize; n];
        let mut u = vec![0.0; n];
        loop {
            for i in 0..n {
                u[i] = lo[i] + step[i] * idx[i] as f64;
            }
            if feasible(&cons, &u, FEAS_TOL) {
                let o = red.objective(&u);
                if o < best_obj {
                    best_obj = o;
                    best.clone_from(&u);
                }
            }
            let mut d = 0;
            while d < n {
                idx[d] += 1;
                if idx[d] < k {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                break;
            }
        }
        for i in 0..n {
            let (l, h) = (lo[i], hi[i]);
            lo[i] = (best[i] - step[i]).max(l);
            hi[i] = (best[i] + step[i]).min(h);
        }
    }
    Ok(best)
}

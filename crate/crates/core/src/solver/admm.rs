//! Over-relaxed ADMM (OSQP-style operator splitting) for
//! `min ½uᵀPu + cᵀu s.t. Gu ≤ h, u ≥ 0`, with active-set polishing.

use super::dense::{axpy, dot, norm_inf, Cholesky, Lu, Mat};

#[derive(Clone, Debug)]
pub struct AdmmSettings {
    pub eps: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    pub sigma: f64,
    pub check_every: usize,
    pub polish_every: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            eps: 1e-6,
            max_iter: 200_000,
            relaxation: 1.6,
            sigma: 1e-6,
            check_every: 25,
            polish_every: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdmmResult {
    pub u: Vec<f64>,
    /// Multipliers of the `Gu ≤ h` rows (nonnegative at optimum).
    pub y_rows: Vec<f64>,
    /// Multipliers of `u ≥ 0` (nonpositive at optimum).
    pub y_bounds: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub polished: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

struct Problem<'a> {
    p: &'a Mat,
    c: &'a [f64],
    g: &'a Mat,
    h: &'a [f64],
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn m(&self) -> usize {
        self.g.rows
    }

    /// Stationarity residual `Pu + c + Gᵀy_G + y_B`.
    fn dual_residual(&self, u: &[f64], yg: &[f64], yb: &[f64]) -> f64 {
        let mut r = self.p.mul_vec(u);
        axpy(1.0, self.c, &mut r);
        axpy(1.0, &self.g.tmul_vec(yg), &mut r);
        axpy(1.0, yb, &mut r);
        norm_inf(&r)
    }

    fn primal_residual(&self, u: &[f64]) -> f64 {
        let gu = self.g.mul_vec(u);
        let rows = gu.iter().zip(self.h).fold(0.0f64, |m, (a, b)| m.max(a - b));
        rows.max(u.iter().fold(0.0f64, |m, &x| m.max(-x)))
    }
}

pub fn solve_qp(p: &Mat, c: &[f64], g: &Mat, h: &[f64], settings: &AdmmSettings) -> AdmmResult {
    let prob = Problem { p, c, g, h };
    let (n, m) = (prob.n(), prob.m());
    let gram = g.gram();
    let mut rho = 0.1;
    let sigma = settings.sigma;
    let alpha = settings.relaxation;
    let factor = |rho: f64| -> Cholesky {
        let mut k = p.clone();
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += rho * gram[(i, j)];
            }
            k[(i, i)] += sigma + rho;
        }
        Cholesky::new(&k).expect("P + σI + ρAᵀA is positive definite")
    };
    let mut chol = factor(rho);

    let mut u = vec![0.0; n];
    // Splitting variables and multipliers for the G rows and the bounds.
    let mut zg = vec![0.0; m];
    let mut zb = vec![0.0; n];
    let mut yg = vec![0.0; m];
    let mut yb = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut best: Option<AdmmResult> = None;

    for it in 1..=settings.max_iter {
        for i in 0..n {
            rhs[i] = sigma * u[i] - c[i] + rho * zb[i] - yb[i];
        }
        let w: Vec<f64> = (0..m).map(|r| rho * zg[r] - yg[r]).collect();
        axpy(1.0, &g.tmul_vec(&w), &mut rhs);
        let ut = chol.solve(&rhs);
        let gut = g.mul_vec(&ut);
        for i in 0..n {
            u[i] = alpha * ut[i] + (1.0 - alpha) * u[i];
        }
        for r in 0..m {
            let relaxed = alpha * gut[r] + (1.0 - alpha) * zg[r];
            let z_new = (relaxed + yg[r] / rho).min(h[r]);
            yg[r] += rho * (relaxed - z_new);
            zg[r] = z_new;
        }
        for i in 0..n {
            let relaxed = alpha * ut[i] + (1.0 - alpha) * zb[i];
            let z_new = (relaxed + yb[i] / rho).max(0.0);
            yb[i] += rho * (relaxed - z_new);
            zb[i] = z_new;
        }

        if it % settings.check_every == 0 || it == settings.max_iter {
            let gu = g.mul_vec(&u);
            let rp = gu
                .iter()
                .zip(&zg)
                .map(|(a, b)| (a - b).abs())
                .chain(u.iter().zip(&zb).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let rd = prob.dual_residual(&u, &yg, &yb);
            let scale_p = norm_inf(&gu).max(norm_inf(&zg)).max(norm_inf(&u)).max(1e-12);
            let pu = p.mul_vec(&u);
            let gty = g.tmul_vec(&yg);
            let scale_d = norm_inf(&pu).max(norm_inf(&gty)).max(norm_inf(c)).max(1e-12);
            if rp <= settings.eps && rd <= settings.eps {
                let mut res = finish(&prob, &u, &yg, &yb, it, true);
                if let Some(pol) = polish(&prob, &u, &zg, &yg, &yb, it) {
                    res = pol;
                }
                return res;
            }
            if it % settings.polish_every == 0 {
                if let Some(pol) = polish(&prob, &u, &zg, &yg, &yb, it) {
                    return pol;
                }
            }
            let ratio = ((rp / scale_p) / (rd / scale_d).max(1e-30)).sqrt();
            let new_rho = (rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                rho = new_rho;
                chol = factor(rho);
            }
            let candidate = finish(&prob, &u, &yg, &yb, it, false);
            if best
                .as_ref()
                .is_none_or(|b| candidate.primal_residual.max(candidate.dual_residual) < b.primal_residual.max(b.dual_residual))
            {
                best = Some(candidate);
            }
        }
    }
    let mut res = best.unwrap_or_else(|| finish(&prob, &u, &yg, &yb, settings.max_iter, false));
    res.iterations = settings.max_iter;
    res
}

fn finish(prob: &Problem, u: &[f64], yg: &[f64], yb: &[f64], it: usize, converged: bool) -> AdmmResult {
    AdmmResult {
        u: u.to_vec(),
        y_rows: yg.to_vec(),
        y_bounds: yb.to_vec(),
        iterations: it,
        converged,
        polished: false,
        primal_residual: prob.primal_residual(u),
        dual_residual: prob.dual_residual(u, yg, yb),
    }
}

/// Active-set refinement of an ADMM iterate: solves the KKT system of the
/// guessed active set, then drops constraints whose multipliers have the
/// wrong sign and adds violated ones until the KKT conditions hold.
fn polish(prob: &Problem, u: &[f64], zg: &[f64], yg: &[f64], yb: &[f64], it: usize) -> Option<AdmmResult> {
    let (n, m) = (prob.n(), prob.m());
    let scale = norm_inf(u).max(1.0);
    // Constraint k < m is row k of G; k ≥ m is the bound on u[k − m].
    let mut active: Vec<bool> = (0..m)
        .map(|r| prob.h[r] - zg[r] < yg[r] || (prob.h[r] - zg[r]).abs() <= 1e-9 * scale)
        .chain((0..n).map(|i| u[i] < -yb[i] || u[i].abs() <= 1e-9 * scale))
        .collect();
    // Larger ADMM multipliers first when choosing an independent subset.
    let weight: Vec<f64> = yg.iter().map(|v| v.abs()).chain(yb.iter().map(|v| v.abs())).collect();
    let tol = 1e-9 * (1.0 + norm_inf(prob.c)).max(norm_inf(prob.h));
    const ROUNDS: usize = 200;
    for round in 0..ROUNDS {
        let chosen = independent_subset(prob, &active, &weight);
        let (u_pol, yg_pol, yb_pol) = kkt_solve(prob, &chosen)?;
        let gu = prob.g.mul_vec(&u_pol);
        let slack = |k: usize| if k < m { gu[k] - prob.h[k] } else { -u_pol[k - m] };
        let mult = |k: usize| if k < m { yg_pol[k] } else { -yb_pol[k - m] };
        let violated = (0..m + n).filter(|&k| !active[k]).map(|k| (k, slack(k))).filter(|&(_, v)| v > tol);
        let wrong = (0..m + n).filter(|&k| chosen.contains(&k)).map(|k| (k, -mult(k))).filter(|&(_, v)| v > tol);
        let (violated, wrong): (Vec<_>, Vec<_>) = (violated.collect(), wrong.collect());
        if violated.is_empty() && wrong.is_empty() {
            let mut res = finish(prob, &u_pol, &yg_pol, &yb_pol, it, true);
            if res.primal_residual > tol || res.dual_residual > tol {
                return None;
            }
            res.polished = true;
            res.u.iter_mut().for_each(|v| *v = v.max(0.0));
            res.y_rows.iter_mut().for_each(|v| *v = v.max(0.0));
            res.y_bounds.iter_mut().for_each(|v| *v = v.min(0.0));
            return Some(res);
        }
        let worst = |v: &[(usize, f64)]| v.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0);
        if round < 20 {
            // Primal-dual active-set step: all changes at once.
            violated.iter().for_each(|&(k, _)| active[k] = true);
            wrong.iter().for_each(|&(k, _)| active[k] = false);
        } else if let Some(k) = worst(&violated) {
            // Single changes from here on to avoid cycling.
            active[k] = true;
        } else if let Some(k) = worst(&wrong) {
            active[k] = false;
        }
    }
    None
}

/// Indices of a linearly independent subset of the active constraints,
/// picked greedily in order of decreasing weight (modified Gram–Schmidt).
fn independent_subset(prob: &Problem, active: &[bool], weight: &[f64]) -> Vec<usize> {
    let (n, m) = (prob.n(), prob.m());
    let mut order: Vec<usize> = (0..m + n).filter(|&k| active[k]).collect();
    order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]).then(a.cmp(&b)));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for k in order {
        let mut v = if k < m {
            prob.g.row(k).to_vec()
        } else {
            let mut e = vec![0.0; n];
            e[k - m] = 1.0;
            e
        };
        let norm0 = norm_inf(&v);
        if norm0 == 0.0 {
            continue;
        }
        for q in &basis {
            let d = dot(q, &v);
            axpy(-d, q, &mut v);
        }
        let nrm = dot(&v, &v).sqrt();
        if nrm > 1e-9 * norm0 {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
            chosen.push(k);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Solves the KKT system with the listed constraints held as equalities.
fn kkt_solve(prob: &Problem, active: &[usize]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n, m) = (prob.n(), prob.m());
    let dim = n + active.len();
    let delta = 1e-9;
    let mut kkt = Mat::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = prob.p[(i, j)];
        }
    }
    let mut b = vec![0.0; dim];
    for i in 0..n {
        b[i] = -prob.c[i];
    }
    for (a, &k) in active.iter().enumerate() {
        if k < m {
            let row = prob.g.row(k);
            for j in 0..n {
                kkt[(n + a, j)] = row[j];
                kkt[(j, n + a)] = row[j];
            }
            b[n + a] = prob.h[k];
        } else {
            // −u ≤ 0 held as u = 0; its multiplier is stored with the bound sign.
            kkt[(n + a, k - m)] = 1.0;
            kkt[(k - m, n + a)] = 1.0;
        }
    }
    let mut reg = kkt.clone();
    for i in 0..dim {
        reg[(i, i)] += if i < n { delta } else { -delta };
    }
    let lu = Lu::new(&reg)?;
    let mut sol = lu.solve(&b);
    for _ in 0..10 {
        let r: Vec<f64> = (0..dim).map(|i| b[i] - dot(kkt.row(i), &sol)).collect();
        if norm_inf(&r) < 1e-13 {
            break;
        }
        let corr = lu.solve(&r);
        axpy(1.0, &corr, &mut sol);
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut yg = vec![0.0; m];
    let mut yb = vec![0.0; n];
    for (a, &k) in active.iter().enumerate() {
        if k < m {
            yg[k] = sol[n + a];
        } else {
            yb[k - m] = sol[n + a];
        }
    }
    sol.truncate(n);
    Some((sol, yg, yb))
}

//! Discretized convex relaxations of the DTA and FNC problems.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::ctm::{CostSpec, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::network::{Network, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProgramKind {
    /// Turning ratios are free: only flow conservation couples the split.
    Dta,
    /// Turning ratios fixed by the scenario's routing schedule.
    Fnc,
}

impl fmt::Display for ProgramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProgramKind::Dta => "dta",
            ProgramKind::Fnc => "fnc",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    X,
    Y,
    Z,
    F,
    Mu,
}

/// What a variable stands for: `index` is a cell index, or an edge index for `F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarInfo {
    pub kind: VarKind,
    pub index: usize,
    pub t: usize,
}

/// Sparse linear row `Σ coef·v (= or ≤) rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: String,
}

impl Row {
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.coefs.iter().map(|&(k, c)| c * v[k]).sum()
    }
}

/// `min Σ c_k v_k + Σ q_k v_k²` subject to equality rows, `≤` rows and `v ≥ 0`.
#[derive(Clone, Debug)]
pub struct ConvexProgram {
    pub kind: ProgramKind,
    pub epsilon: f64,
    pub horizon: usize,
    pub vars: Vec<VarInfo>,
    pub linear: Vec<f64>,
    /// Diagonal quadratic weights `q_k` (objective term `q_k v_k²`).
    pub quadratic: Vec<f64>,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    layout: Layout,
}

#[derive(Clone, Debug)]
struct Layout {
    n: usize,
    m: usize,
    horizon: usize,
    sink_slot: Vec<Option<usize>>,
    ids: Vec<u32>,
    edge_ids: Vec<(u32, u32)>,
}

impl Layout {
    fn x(&self, i: usize, t: usize) -> usize {
        t * self.n + i
    }
    fn y(&self, i: usize, t: usize) -> usize {
        (self.horizon + 1) * self.n + t * self.n + i
    }
    fn z(&self, i: usize, t: usize) -> usize {
        (2 * self.horizon + 1) * self.n + t * self.n + i
    }
    fn f(&self, e: usize, t: usize) -> usize {
        (3 * self.horizon + 1) * self.n + t * self.m + e
    }
    fn mu(&self, i: usize, t: usize) -> Option<usize> {
        let k = self.sink_slot[i]?;
        let sinks = self.sink_slot.iter().flatten().count();
        Some((3 * self.horizon + 1) * self.n + self.horizon * self.m + t * sinks + k)
    }
}

impl ConvexProgram {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().all(|&q| q == 0.0)
    }

    pub fn x_index(&self, i: usize, t: usize) -> usize {
        self.layout.x(i, t)
    }
    pub fn y_index(&self, i: usize, t: usize) -> usize {
        self.layout.y(i, t)
    }
    pub fn z_index(&self, i: usize, t: usize) -> usize {
        self.layout.z(i, t)
    }
    pub fn f_index(&self, e: usize, t: usize) -> usize {
        self.layout.f(e, t)
    }
    pub fn mu_index(&self, i: usize, t: usize) -> Option<usize> {
        self.layout.mu(i, t)
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(self.linear.iter().zip(&self.quadratic))
            .map(|(&x, (&c, &q))| c * x + q * x * x)
            .sum()
    }

    /// Residuals measured directly against the rows.
    pub fn feasibility(&self, v: &[f64]) -> Feasibility {
        let equality = self
            .equalities
            .iter()
            .map(|r| (r.eval(v) - r.rhs).abs())
            .fold(0.0, f64::max);
        let inequality = self
            .inequalities
            .iter()
            .map(|r| (r.eval(v) - r.rhs).max(0.0))
            .fold(0.0, f64::max);
        let bounds = v.iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max);
        Feasibility { equality, inequality, bounds }
    }

    pub fn var_name(&self, k: usize) -> String {
        let v = self.vars[k];
        let l = &self.layout;
        match v.kind {
            VarKind::X => format!("x_{}_{}", l.ids[v.index], v.t),
            VarKind::Y => format!("y_{}_{}", l.ids[v.index], v.t),
            VarKind::Z => format!("z_{}_{}", l.ids[v.index], v.t),
            VarKind::Mu => format!("mu_{}_{}", l.ids[v.index], v.t),
            VarKind::F => {
                let (a, b) = l.edge_ids[v.index];
                format!("f_{a}_{b}_{}", v.t)
            }
        }
    }

    /// Volumes `x[t][i]` extracted from a solution vector.
    pub fn volumes(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let l = &self.layout;
        (0..=l.horizon).map(|t| (0..l.n).map(|i| v[l.x(i, t)]).collect()).collect()
    }

    pub fn outflows(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let l = &self.layout;
        (0..l.horizon).map(|t| (0..l.n).map(|i| v[l.z(i, t)]).collect()).collect()
    }

    pub fn edge_flows(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let l = &self.layout;
        (0..l.horizon).map(|t| (0..l.m).map(|e| v[l.f(e, t)]).collect()).collect()
    }

    /// Maps a simulated trajectory to the program's variable vector.
    pub fn point_from_trajectory(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let l = &self.layout;
        if traj.horizon() != l.horizon {
            return invalid("trajectory horizon differs from the program's");
        }
        let mut v = vec![0.0; self.len()];
        for t in 0..=l.horizon {
            for i in 0..l.n {
                v[l.x(i, t)] = traj.x[t][i];
            }
        }
        for (t, r) in traj.rates.iter().enumerate() {
            for i in 0..l.n {
                v[l.y(i, t)] = r.y[i];
                v[l.z(i, t)] = r.z[i];
                if let Some(k) = l.mu(i, t) {
                    v[k] = r.mu[i];
                }
            }
            for e in 0..l.m {
                v[l.f(e, t)] = r.f[e];
            }
        }
        Ok(v)
    }

    /// Text export in the CPLEX LP interchange format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ {} relaxation, epsilon {}, horizon {}", self.kind, self.epsilon, self.horizon);
        out.push_str("Minimize\n obj:");
        let mut any = false;
        for (k, &c) in self.linear.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {} {}", signed(c), self.var_name(k));
                any = true;
            }
        }
        if !self.is_linear() {
            out.push_str(" + [");
            for (k, &q) in self.quadratic.iter().enumerate() {
                if q != 0.0 {
                    let _ = write!(out, " {} {} ^2", signed(2.0 * q), self.var_name(k));
                }
            }
            out.push_str(" ] / 2");
            any = true;
        }
        if !any {
            out.push_str(" 0 x_dummy");
        }
        out.push_str("\nSubject To\n");
        for (r, sense) in self.equalities.iter().map(|r| (r, "=")).chain(self.inequalities.iter().map(|r| (r, "<="))) {
            let _ = write!(out, " {}:", r.label);
            if r.coefs.is_empty() {
                out.push_str(" 0 x_dummy");
            }
            for &(k, c) in &r.coefs {
                let _ = write!(out, " {} {}", signed(c), self.var_name(k));
            }
            let _ = writeln!(out, " {sense} {}", fmt_num(r.rhs));
        }
        out.push_str("Bounds\n");
        for k in 0..self.len() {
            let _ = writeln!(out, " {} >= 0", self.var_name(k));
        }
        out.push_str("End\n");
        out
    }

    /// Reads a `name value` listing (one per line, `#`/`\` comments allowed)
    /// as produced by external LP solvers, returning the variable vector.
    pub fn import_solution(&self, text: &str) -> Result<Vec<f64>> {
        let index: HashMap<String, usize> = (0..self.len()).map(|k| (self.var_name(k), k)).collect();
        let mut v = vec![0.0; self.len()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('\\') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value)) = (parts.next(), parts.next()) else {
                return Err(Error::Config(format!("line {}: expected 'name value'", lineno + 1)));
            };
            let Some(&k) = index.get(name) else {
                if name == "x_dummy" || name.eq_ignore_ascii_case("objective") {
                    continue;
                }
                return Err(Error::Config(format!("line {}: unknown variable {name}", lineno + 1)));
            };
            v[k] = value
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad number {value}", lineno + 1)))?;
        }
        Ok(v)
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:e}")
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", fmt_num(-c))
    } else {
        format!("+ {}", fmt_num(c))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Feasibility {
    pub equality: f64,
    pub inequality: f64,
    pub bounds: f64,
}

impl Feasibility {
    pub fn max(&self) -> f64 {
        self.equality.max(self.inequality).max(self.bounds)
    }
}

pub fn build_dta(scenario: &Scenario, cost: &CostSpec, epsilon: f64) -> Result<ConvexProgram> {
    build(scenario, cost, epsilon, ProgramKind::Dta)
}

pub fn build_fnc(scenario: &Scenario, cost: &CostSpec, epsilon: f64) -> Result<ConvexProgram> {
    build(scenario, cost, epsilon, ProgramKind::Fnc)
}

pub fn build(scenario: &Scenario, cost: &CostSpec, epsilon: f64, kind: ProgramKind) -> Result<ConvexProgram> {
    if !(0.0..1.0).contains(&epsilon) {
        return invalid(format!("epsilon {epsilon} outside [0,1)"));
    }
    let net: &Network = &scenario.network;
    let routing = match kind {
        ProgramKind::Fnc => Some(
            scenario
                .routing
                .clone()
                .ok_or_else(|| Error::Config("FNC needs an exogenous routing schedule".into()))?,
        ),
        ProgramKind::Dta => None,
    };
    let (n, m, horizon) = (net.len(), net.edges.len(), scenario.horizon);
    let mut sink_slot = vec![None; n];
    for (k, &s) in net.sinks.iter().enumerate() {
        sink_slot[s] = Some(k);
    }
    let layout = Layout {
        n,
        m,
        horizon,
        sink_slot,
        ids: net.cells.iter().map(|c| c.id).collect(),
        edge_ids: net.edges.iter().map(|&(i, j)| (net.id(i), net.id(j))).collect(),
    };
    let mut vars = Vec::new();
    for t in 0..=horizon {
        vars.extend((0..n).map(|i| VarInfo { kind: VarKind::X, index: i, t }));
    }
    for kind in [VarKind::Y, VarKind::Z] {
        for t in 0..horizon {
            vars.extend((0..n).map(|i| VarInfo { kind, index: i, t }));
        }
    }
    for t in 0..horizon {
        vars.extend((0..m).map(|e| VarInfo { kind: VarKind::F, index: e, t }));
    }
    for t in 0..horizon {
        vars.extend(net.sinks.iter().map(|&i| VarInfo { kind: VarKind::Mu, index: i, t }));
    }

    let coefs = cost.coefficients(net);
    let mut linear = vec![0.0; vars.len()];
    let mut quadratic = vec![0.0; vars.len()];
    for t in 0..=horizon {
        for i in 0..n {
            linear[layout.x(i, t)] = coefs.lin_x[i];
            quadratic[layout.x(i, t)] = coefs.quad_x[i];
            if t < horizon {
                linear[layout.z(i, t)] = coefs.lin_z[i];
            }
        }
    }

    let id = |i: usize| net.id(i);
    let mut eq = Vec::new();
    let mut ineq = Vec::new();
    for i in 0..n {
        eq.push(Row { coefs: vec![(layout.x(i, 0), 1.0)], rhs: scenario.x0[i], label: format!("init_{}", id(i)) });
    }
    for t in 0..horizon {
        for i in 0..n {
            let fd = &net.cells[i].diagram;
            eq.push(Row {
                coefs: vec![(layout.x(i, t + 1), 1.0), (layout.x(i, t), -1.0), (layout.y(i, t), -1.0), (layout.z(i, t), 1.0)],
                rhs: 0.0,
                label: format!("dyn_{}_{t}", id(i)),
            });
            let mut row = vec![(layout.y(i, t), 1.0)];
            row.extend(net.in_edges[i].iter().map(|&e| (layout.f(e, t), -1.0)));
            eq.push(Row { coefs: row, rhs: scenario.inflow_at(i, t), label: format!("in_{}_{t}", id(i)) });
            let mut row = vec![(layout.z(i, t), 1.0)];
            row.extend(net.out_edges[i].iter().map(|&e| (layout.f(e, t), -1.0)));
            if let Some(k) = layout.mu(i, t) {
                row.push((k, -1.0));
            }
            eq.push(Row { coefs: row, rhs: 0.0, label: format!("out_{}_{t}", id(i)) });
            if let Some(r) = &routing {
                for &e in &net.out_edges[i] {
                    let ratio = r.ratio(net, e, t);
                    let (a, b) = layout.edge_ids[e];
                    eq.push(Row {
                        coefs: vec![(layout.f(e, t), 1.0), (layout.z(i, t), -ratio)],
                        rhs: 0.0,
                        label: format!("route_{a}_{b}_{t}"),
                    });
                }
            }

            let cap = fd.capacity_at(t);
            ineq.push(Row {
                coefs: vec![(layout.z(i, t), 1.0), (layout.x(i, t), -fd.demand_slope)],
                rhs: 0.0,
                label: format!("dem_{}_{t}", id(i)),
            });
            if cap.is_finite() {
                ineq.push(Row { coefs: vec![(layout.z(i, t), 1.0)], rhs: cap, label: format!("cap_{}_{t}", id(i)) });
            }
            if !fd.is_source {
                let k = 1.0 - epsilon;
                ineq.push(Row {
                    coefs: vec![(layout.y(i, t), 1.0), (layout.x(i, t), k * fd.supply_slope)],
                    rhs: k * fd.supply_slope * fd.jam_volume,
                    label: format!("sup_{}_{t}", id(i)),
                });
                if cap.is_finite() {
                    ineq.push(Row { coefs: vec![(layout.y(i, t), 1.0)], rhs: k * cap, label: format!("supcap_{}_{t}", id(i)) });
                }
            }
        }
    }
    Ok(ConvexProgram {
        kind,
        epsilon,
        horizon,
        vars,
        linear,
        quadratic,
        equalities: eq,
        inequalities: ineq,
        layout,
    })
}

//! Discrete-time Cell Transmission Model.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::network::{Network, Scenario, SourceActuation, Supply, VOLUME_TOL};
use crate::synthesis::ControlSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Model {
    /// FIFO diverges, proportional merges.
    #[default]
    Fifo,
    /// FIFO diverges, priority (median) rule at two-way merges.
    FifoPriority,
    /// Each downstream cell throttles only the flow directed to it.
    NonFifo,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Fifo => "fifo",
            Model::FifoPriority => "fifo-priority",
            Model::NonFifo => "nonfifo",
        })
    }
}

/// Flows at one step. All vectors are per cell except `f`, which is per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRates {
    /// Controlled demand `d̄`.
    pub demand: Vec<f64>,
    pub supply: Vec<Supply>,
    pub f: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
    /// FIFO: coefficient of the cell as an upstream cell. Non-FIFO: coefficient
    /// of the cell as a downstream cell. 1 where no throttling applies.
    pub gamma: Vec<f64>,
}

impl FlowRates {
    pub fn min_gamma(&self) -> f64 {
        self.gamma.iter().copied().fold(1.0, f64::min)
    }
}

/// Inputs of a single rate evaluation.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs<'a> {
    pub alpha: &'a [f64],
    /// Turning ratios per edge.
    pub routing: &'a [f64],
    pub inflow: &'a [f64],
    pub t: usize,
    pub actuation: SourceActuation,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 || num.is_infinite() {
        1.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

struct Common {
    demand: Vec<f64>,
    supply: Vec<Supply>,
    inbound: Vec<f64>,
}

fn common(net: &Network, x: &[f64], inp: &StepInputs) -> Result<Common> {
    let n = net.len();
    if x.len() != n || inp.alpha.len() != n || inp.inflow.len() != n || inp.routing.len() != net.edges.len() {
        return invalid("state, control, inflow or routing has the wrong shape");
    }
    let mut demand = Vec::with_capacity(n);
    let mut supply = Vec::with_capacity(n);
    for (i, c) in net.cells.iter().enumerate() {
        demand.push(c.diagram.demand_with(x[i], inp.alpha[i], inp.t, inp.actuation)?);
        supply.push(c.diagram.supply(x[i], inp.t)?);
    }
    let mut inbound = vec![0.0; n];
    for (e, &(h, k)) in net.edges.iter().enumerate() {
        inbound[k] += inp.routing[e] * demand[h];
    }
    Ok(Common { demand, supply, inbound })
}

fn finish(net: &Network, c: Common, f: Vec<f64>, z: Vec<f64>, gamma: Vec<f64>, inflow: &[f64]) -> FlowRates {
    let n = net.len();
    let mut y = inflow.to_vec();
    for (e, &(_, j)) in net.edges.iter().enumerate() {
        y[j] += f[e];
    }
    let mut mu = vec![0.0; n];
    for &s in &net.sinks {
        mu[s] = z[s];
    }
    FlowRates { demand: c.demand, supply: c.supply, f, y, z, mu, gamma }
}

/// FIFO rates with proportional merges and ramp-metered sources.
pub fn fifo_rates(net: &Network, x: &[f64], alpha: &[f64], routing: &[f64], inflow: &[f64], t: usize) -> Result<FlowRates> {
    let inp = StepInputs { alpha, routing, inflow, t, actuation: SourceActuation::RampMeter };
    rates(net, Model::Fifo, x, &inp)
}

/// Non-FIFO rates with ramp-metered sources.
pub fn nonfifo_rates(net: &Network, x: &[f64], alpha: &[f64], routing: &[f64], inflow: &[f64], t: usize) -> Result<FlowRates> {
    let inp = StepInputs { alpha, routing, inflow, t, actuation: SourceActuation::RampMeter };
    rates(net, Model::NonFifo, x, &inp)
}

pub fn rates(net: &Network, model: Model, x: &[f64], inp: &StepInputs) -> Result<FlowRates> {
    let c = common(net, x, inp)?;
    let n = net.len();
    let m = net.edges.len();
    let mut f = vec![0.0; m];
    let mut z = vec![0.0; n];
    let mut gamma = vec![1.0; n];
    match model {
        Model::Fifo | Model::FifoPriority => {
            let throttle: Vec<f64> = (0..n).map(|k| ratio(c.supply[k].value(), c.inbound[k])).collect();
            for i in 0..n {
                gamma[i] = net.out_edges[i]
                    .iter()
                    .map(|&e| throttle[net.edges[e].1])
                    .fold(1.0, f64::min);
            }
            if model == Model::FifoPriority {
                for junction in &net.junctions {
                    if junction.upstream.len() != 2 || junction.downstream.len() != 1 {
                        continue;
                    }
                    let j = junction.downstream[0];
                    let (a, b) = (junction.upstream[0], junction.upstream[1]);
                    let p = merge_priorities(net, j, a, b);
                    let flows = priority_merge_flows(&[c.demand[a], c.demand[b]], c.supply[j].value(), &p)?;
                    for (k, &i) in [a, b].iter().enumerate() {
                        gamma[i] = ratio(flows[k], c.demand[i]);
                    }
                }
            }
            for i in 0..n {
                z[i] = gamma[i] * c.demand[i];
                for &e in &net.out_edges[i] {
                    f[e] = inp.routing[e] * z[i];
                }
            }
        }
        Model::NonFifo => {
            for k in 0..n {
                gamma[k] = ratio(c.supply[k].value(), c.inbound[k]);
            }
            for i in 0..n {
                if net.out_edges[i].is_empty() {
                    z[i] = c.demand[i];
                    continue;
                }
                let mut total = 0.0;
                for &e in &net.out_edges[i] {
                    let j = net.edges[e].1;
                    f[e] = gamma[j] * inp.routing[e] * c.demand[i];
                    total += f[e];
                }
                z[i] = total;
            }
        }
    }
    Ok(finish(net, c, f, z, gamma, inp.inflow))
}

fn merge_priorities(net: &Network, j: usize, a: usize, b: usize) -> [f64; 2] {
    match net.priorities.get(&j) {
        Some(p) => {
            let get = |i: usize| p.iter().find(|e| e.0 == i).map_or(0.0, |e| e.1);
            [get(a), get(b)]
        }
        None => [0.5, 0.5],
    }
}

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Two-way merge under the priority rule: each flow is the median of its own
/// demand, the supply left by the other stream, and its priority share.
pub fn priority_merge_flows(demands: &[f64], supply: f64, p: &[f64]) -> Result<Vec<f64>> {
    if demands.len() != p.len() {
        return invalid("one priority per upstream cell required");
    }
    match demands.len() {
        0 => Ok(vec![]),
        1 => Ok(vec![demands[0].min(supply)]),
        2 => {
            if p.iter().any(|&v| v < 0.0) || (p[0] + p[1] - 1.0).abs() > 1e-9 {
                return invalid("priorities must be nonnegative and sum to 1");
            }
            if demands[0] + demands[1] <= supply {
                return Ok(demands.to_vec());
            }
            Ok(vec![
                median3(demands[0], supply - demands[1], p[0] * supply),
                median3(demands[1], supply - demands[0], p[1] * supply),
            ])
        }
        n => invalid(format!("priority merge supports two upstream cells, got {n}")),
    }
}

/// `x⁺ = x + y − z`, checked against the state box.
pub fn step(net: &Network, x: &[f64], r: &FlowRates) -> Result<Vec<f64>> {
    let next: Vec<f64> = (0..x.len()).map(|i| x[i] + r.y[i] - r.z[i]).collect();
    for (i, &v) in next.iter().enumerate() {
        let d = &net.cells[i].diagram;
        if v < -VOLUME_TOL || !v.is_finite() || (!d.is_source && v > d.jam_volume + VOLUME_TOL * (1.0 + d.jam_volume)) {
            return Err(Error::Invariant {
                step: 0,
                message: format!("cell {} volume {v} left [0, {}]", net.id(i), d.jam_volume),
            });
        }
    }
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub model: Model,
    /// `x[t]` for `t = 0..=T`.
    pub x: Vec<Vec<f64>>,
    /// Rates for `t = 0..T`.
    pub rates: Vec<FlowRates>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.rates.len()
    }

    pub fn min_gamma(&self) -> f64 {
        self.rates.iter().map(FlowRates::min_gamma).fold(1.0, f64::min)
    }

    /// Steps at which some coefficient is below `1 − tol`.
    pub fn congested_steps(&self, tol: f64) -> Vec<usize> {
        (0..self.rates.len())
            .filter(|&t| self.rates[t].min_gamma() < 1.0 - tol)
            .collect()
    }

    pub fn total_volume(&self, t: usize) -> f64 {
        self.x[t].iter().sum()
    }
}

/// Open-loop simulation. Without controls every α is 1 and the scenario's
/// routing is used.
pub fn simulate(scenario: &Scenario, controls: Option<&ControlSchedule>, model: Model) -> Result<Trajectory> {
    let net = &scenario.network;
    let n = net.len();
    let default_routing;
    let (routing, actuation) = match controls {
        Some(c) => (&c.routing, c.actuation),
        None => {
            default_routing = scenario.routing_or_trivial()?;
            (&default_routing, SourceActuation::RampMeter)
        }
    };
    let ones = vec![1.0; n];
    let mut x = scenario.x0.clone();
    if x.len() != n {
        return invalid("initial state has the wrong length");
    }
    let mut xs = Vec::with_capacity(scenario.horizon + 1);
    let mut all = Vec::with_capacity(scenario.horizon);
    xs.push(x.clone());
    for t in 0..scenario.horizon {
        let alpha = match controls {
            Some(c) => c.alpha_at(t),
            None => &ones[..],
        };
        let r = routing.at(net, t);
        let lambda = scenario.inflow_vec(t);
        let inp = StepInputs { alpha, routing: &r, inflow: &lambda, t, actuation };
        let rt = rates(net, model, &x, &inp).map_err(|e| with_step(e, t))?;
        x = step(net, &x, &rt).map_err(|e| with_step(e, t))?;
        xs.push(x.clone());
        all.push(rt);
    }
    Ok(Trajectory { model, x: xs, rates: all })
}

fn with_step(e: Error, t: usize) -> Error {
    match e {
        Error::Invariant { message, .. } => Error::Invariant { step: t, message },
        Error::Invalid(m) => Error::Invariant { step: t, message: m },
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostKind {
    /// Total travel time: `x`.
    Ttt,
    /// Negated total travel distance: `−L·z`.
    Ttd,
    /// `x − z/slope`.
    Delay,
    /// `x²`.
    QuadraticVolume,
    /// `a·x + b·z` with per-cell `a ≥ 0`, `b ≤ 0`.
    WeightedSum { x: Vec<f64>, z: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    /// Per-cell multipliers; empty means all ones.
    pub weights: Vec<f64>,
}

impl CostSpec {
    pub fn new(kind: CostKind) -> Self {
        CostSpec { kind, weights: Vec::new() }
    }

    pub fn ttt() -> Self {
        Self::new(CostKind::Ttt)
    }

    pub fn quadratic() -> Self {
        Self::new(CostKind::QuadraticVolume)
    }

    pub fn is_linear(&self) -> bool {
        self.kind != CostKind::QuadraticVolume
    }

    /// Per-cell `ψ_i(x, z) = a_i x + q_i x² + b_i z`.
    pub fn coefficients(&self, net: &Network) -> CostCoefficients {
        let n = net.len();
        let w = |i: usize| self.weights.get(i).copied().unwrap_or(1.0);
        let mut c = CostCoefficients { lin_x: vec![0.0; n], quad_x: vec![0.0; n], lin_z: vec![0.0; n] };
        for i in 0..n {
            let cell = &net.cells[i];
            match &self.kind {
                CostKind::Ttt => c.lin_x[i] = w(i),
                CostKind::Ttd => c.lin_z[i] = -w(i) * cell.length,
                CostKind::Delay => {
                    c.lin_x[i] = w(i);
                    c.lin_z[i] = -w(i) / cell.diagram.demand_slope;
                }
                CostKind::QuadraticVolume => c.quad_x[i] = w(i),
                CostKind::WeightedSum { x, z } => {
                    c.lin_x[i] = w(i) * x.get(i).copied().unwrap_or(0.0);
                    c.lin_z[i] = w(i) * z.get(i).copied().unwrap_or(0.0);
                }
            }
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostCoefficients {
    pub lin_x: Vec<f64>,
    pub quad_x: Vec<f64>,
    pub lin_z: Vec<f64>,
}

impl CostCoefficients {
    /// Sum of volume terms over `t = 0..=T` and outflow terms over `t < T`.
    pub fn evaluate(&self, x: &[Vec<f64>], z: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for xt in x {
            for (i, &v) in xt.iter().enumerate() {
                total += self.lin_x[i] * v + self.quad_x[i] * v * v;
            }
        }
        for zt in z {
            for (i, &v) in zt.iter().enumerate() {
                total += self.lin_z[i] * v;
            }
        }
        total
    }
}

pub fn evaluate_cost(net: &Network, traj: &Trajectory, cost: &CostSpec) -> f64 {
    let z: Vec<Vec<f64>> = traj.rates.iter().map(|r| r.z.clone()).collect();
    cost.coefficients(net).evaluate(&traj.x, &z)
}

//! Demand controls and routing that make the CTM reproduce a relaxed optimum.

use std::collections::BTreeMap;

use crate::ctm::{self, CostSpec, Model, Trajectory};
use crate::error::{Error, Result};
use crate::network::{uniform_demand_slope, JunctionKind, RoutingSchedule, Scenario, SourceActuation};
use crate::program::{ConvexProgram, ProgramKind};

/// Open-loop controls: `alpha[t][i]` and per-step turning ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSchedule {
    pub alpha: Vec<Vec<f64>>,
    pub routing: RoutingSchedule,
    pub actuation: SourceActuation,
}

impl ControlSchedule {
    /// Uncontrolled operation under the scenario's routing.
    pub fn uncontrolled(scenario: &Scenario) -> Result<ControlSchedule> {
        Ok(ControlSchedule {
            alpha: vec![vec![1.0; scenario.network.len()]; scenario.horizon.max(1)],
            routing: scenario.routing_or_trivial()?,
            actuation: SourceActuation::RampMeter,
        })
    }

    /// `α(t)`, holding the last entry past the end.
    pub fn alpha_at(&self, t: usize) -> &[f64] {
        &self.alpha[t.min(self.alpha.len() - 1)]
    }

    /// The schedule at step `t` held constant.
    pub fn frozen_at(&self, scenario: &Scenario, t: usize) -> ControlSchedule {
        let net = &scenario.network;
        let ratios = net
            .edges
            .iter()
            .enumerate()
            .map(|(e, &k)| (k, vec![self.routing.ratio(net, e, t)]))
            .collect();
        ControlSchedule {
            alpha: vec![self.alpha_at(t).to_vec()],
            routing: RoutingSchedule { ratios },
            actuation: self.actuation,
        }
    }
}

const ZERO_TOL: f64 = 1e-9;

/// Controls from a feasible point of a DTA or FNC program.
pub fn extract_controls(
    program: &ConvexProgram,
    values: &[f64],
    scenario: &Scenario,
    actuation: SourceActuation,
) -> Result<ControlSchedule> {
    let net = &scenario.network;
    let (n, horizon) = (net.len(), program.horizon);
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut alpha = vec![vec![1.0; n]; horizon.max(1)];
    for t in 0..horizon {
        for i in 0..n {
            let fd = &net.cells[i].diagram;
            // Outflows at rounding level are exact zeros: a residual trickle
            // towards a closed cell would stall the whole FIFO junction.
            let z = values[program.z_index(i, t)];
            let z = if z <= 1e-12 * scale { 0.0 } else { z };
            let x = values[program.x_index(i, t)].max(0.0);
            let a = if fd.is_source && actuation == SourceActuation::RampMeter {
                let cap = fd.capacity_at(t);
                if cap <= 0.0 { 1.0 } else { z / cap }
            } else {
                let d = fd.raw_demand(x);
                if d <= ZERO_TOL * scale {
                    if z > 1e-6 * scale {
                        return Err(Error::Invalid(format!(
                            "cell {} step {t}: outflow {z} with zero demand",
                            net.id(i)
                        )));
                    }
                    1.0
                } else {
                    z / d
                }
            };
            alpha[t][i] = a.clamp(0.0, 1.0);
        }
    }
    let routing = match program.kind {
        ProgramKind::Fnc => scenario
            .routing
            .clone()
            .ok_or_else(|| Error::Config("FNC controls need the scenario's routing".into()))?,
        ProgramKind::Dta => {
            let mut ratios: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
            for i in 0..n {
                let outs = &net.out_edges[i];
                if outs.is_empty() {
                    continue;
                }
                for t in 0..horizon {
                    let flows: Vec<f64> = outs.iter().map(|&e| values[program.f_index(e, t)].max(0.0)).collect();
                    let total: f64 = flows.iter().sum();
                    let z = values[program.z_index(i, t)];
                    for (k, &e) in outs.iter().enumerate() {
                        let r = if z <= ZERO_TOL * scale || total <= ZERO_TOL * scale {
                            1.0 / outs.len() as f64
                        } else {
                            flows[k] / total
                        };
                        ratios.entry(net.edges[e]).or_default().push(r);
                    }
                }
            }
            RoutingSchedule { ratios }
        }
    };
    Ok(ControlSchedule { alpha, routing, actuation })
}

#[derive(Clone, Debug)]
pub struct RealizationReport {
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Per step: every coefficient equals 1 within 1e-9.
    pub free_flow: Vec<bool>,
    /// `z = d̄(x, α)` holds at every step and cell.
    pub demand_identity: bool,
    pub trajectory: Trajectory,
}

impl RealizationReport {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance && self.free_flow.iter().all(|&b| b) && self.demand_identity
    }

    pub fn all_free_flow(&self) -> bool {
        self.free_flow.iter().all(|&b| b)
    }
}

/// Replays `controls` and compares with `reference` volumes `x[t][i]`.
pub fn verify_realization(
    controls: &ControlSchedule,
    scenario: &Scenario,
    reference: &[Vec<f64>],
    model: Model,
) -> Result<RealizationReport> {
    let traj = ctm::simulate(scenario, Some(controls), model)?;
    let mut max_dev = 0.0f64;
    let mut max_ref = 0.0f64;
    for (xs, xr) in traj.x.iter().zip(reference) {
        for (a, b) in xs.iter().zip(xr) {
            max_dev = max_dev.max((a - b).abs());
            max_ref = max_ref.max(b.abs());
        }
    }
    if reference.len() != traj.x.len() {
        max_dev = f64::INFINITY;
    }
    let free_flow = traj.rates.iter().map(|r| r.min_gamma() >= 1.0 - 1e-9).collect();
    let demand_identity = traj.rates.iter().all(|r| {
        r.z.iter()
            .zip(&r.demand)
            .all(|(z, d)| (z - d).abs() <= 1e-9 * (1.0 + d.abs()))
    });
    Ok(RealizationReport {
        max_deviation: max_dev,
        tolerance: 1e-6 * (1.0 + max_ref),
        free_flow,
        demand_identity,
        trajectory: traj,
    })
}

/// Outcome of the structural check on FNC optima with equal demand slopes.
#[derive(Clone, Debug)]
pub struct StructuralReport {
    pub fnc_cost: f64,
    pub fifo_cost: f64,
    pub relative_gap: f64,
    /// Largest `|z* − γ·d̄(x*)|` over cells upstream of ordinary/diverge junctions.
    pub max_flow_mismatch: f64,
    pub checked_cells: usize,
}

/// Compares an FNC optimum with the uncontrolled FIFO evolution: equal costs,
/// and greedy outflows `z_i = γ_i·min{d_i(x_i), C_i}` at every cell feeding an
/// ordinary or diverge junction.
pub fn structural_check(
    scenario: &Scenario,
    program: &ConvexProgram,
    values: &[f64],
    cost: &CostSpec,
) -> Result<StructuralReport> {
    let net = &scenario.network;
    if program.kind != ProgramKind::Fnc {
        return Err(Error::Config("structural check applies to FNC optima".into()));
    }
    if uniform_demand_slope(net, 1e-12).is_none() {
        return Err(Error::Config("structural check needs identical demand slopes".into()));
    }
    if net.junctions.iter().any(|j| j.kind() == JunctionKind::General) {
        return Err(Error::Config("structural check refuses general junctions".into()));
    }
    let fifo = ctm::simulate(scenario, None, Model::Fifo)?;
    let fifo_cost = ctm::evaluate_cost(net, &fifo, cost);
    let fnc_cost = program.objective(values);
    let routing = scenario.routing_or_trivial()?;
    let mut mismatch = 0.0f64;
    let mut checked = std::collections::BTreeSet::new();
    for junction in &net.junctions {
        if !matches!(junction.kind(), JunctionKind::Ordinary | JunctionKind::Diverge) {
            continue;
        }
        let i = junction.upstream[0];
        checked.insert(i);
        for t in 0..program.horizon {
            let x = |k: usize| values[program.x_index(k, t)].max(0.0);
            let fd = &net.cells[i].diagram;
            let d = fd.raw_demand(x(i)).min(fd.capacity_at(t));
            let mut gamma = 1.0f64;
            for &e in &net.out_edges[i] {
                let j = net.edges[e].1;
                let want = routing.ratio(net, e, t) * d;
                let s = net.cells[j].diagram.supply(x(j), t)?.value();
                if want > 0.0 && s < want {
                    gamma = gamma.min(s / want);
                }
            }
            let z = values[program.z_index(i, t)];
            mismatch = mismatch.max((z - gamma * d).abs());
        }
    }
    Ok(StructuralReport {
        fnc_cost,
        fifo_cost,
        relative_gap: (fnc_cost - fifo_cost).abs() / fifo_cost.abs().max(1e-12),
        max_flow_mismatch: mismatch,
        checked_cells: checked.len(),
    })
}

/// Secondary objective favouring early outflow, used to pick the canonical
/// optimum among degenerate ones: `−Σ_t Σ_i (T − t)·z_i(t)`.
pub fn early_flow_objective(program: &ConvexProgram, n_cells: usize) -> Vec<f64> {
    let mut c = vec![0.0; program.len()];
    for t in 0..program.horizon {
        for i in 0..n_cells {
            c[program.z_index(i, t)] = -((program.horizon - t) as f64);
        }
    }
    c
}

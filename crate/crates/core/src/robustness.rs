//! Bounds on `‖x̃(t) − x(t)‖₁` for controlled trajectories under perturbed
//! initial volumes and inflows.

use std::fmt;

use crate::ctm::{self, Model, StepInputs};
use crate::error::{Error, Result};
use crate::network::{Network, Scenario};
use crate::synthesis::ControlSchedule;

/// Perturbed initial volumes and inflow series (same shapes as the scenario).
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub x0: Vec<f64>,
    pub inflow: Vec<Vec<f64>>,
}

impl PerturbationSpec {
    pub fn none(scenario: &Scenario) -> Self {
        PerturbationSpec { x0: scenario.x0.clone(), inflow: padded_inflow(scenario) }
    }

    /// Nominal inflow plus `delta` on `source` at every step.
    pub fn inflow_offset(scenario: &Scenario, source: usize, delta: f64) -> Self {
        let mut p = Self::none(scenario);
        for v in p.inflow[source].iter_mut() {
            *v = (*v + delta).max(0.0);
        }
        p
    }

    /// The scenario with this perturbation applied.
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        s.x0.clone_from(&self.x0);
        s.inflow.clone_from(&self.inflow);
        s
    }

    fn inflow_at(&self, i: usize, t: usize) -> f64 {
        self.inflow.get(i).and_then(|s| s.get(t)).copied().unwrap_or(0.0)
    }
}

fn padded_inflow(scenario: &Scenario) -> Vec<Vec<f64>> {
    (0..scenario.network.len())
        .map(|i| (0..scenario.horizon).map(|t| scenario.inflow_at(i, t)).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Prop3,
    Prop4,
    /// Triangle inequality plus the asymptotic growth rate; heuristic for small t.
    OverloadHeuristic,
    Sensitivity,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Prop3 => "prop3",
            Provenance::Prop4 => "prop4",
            Provenance::OverloadHeuristic => "overload-heuristic",
            Provenance::Sensitivity => "sensitivity",
        })
    }
}

/// Upper bound per step `t = 0..=T` with the bound that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurve {
    pub values: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl BoundCurve {
    fn uniform(values: Vec<f64>, p: Provenance) -> Self {
        let provenance = vec![p; values.len()];
        BoundCurve { values, provenance }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Pointwise minimum, keeping the provenance of the smaller curve.
    pub fn min(&self, other: &BoundCurve) -> BoundCurve {
        let mut out = self.clone();
        for t in 0..out.values.len().min(other.values.len()) {
            if other.values[t] < out.values[t] {
                out.values[t] = other.values[t];
                out.provenance[t] = other.provenance[t];
            }
        }
        out
    }
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `‖x̃⁰ − x⁰‖₁ + Σ_{s<t} ‖λ̃(s) − λ(s)‖₁`.
pub fn bound_prop3(scenario: &Scenario, pert: &PerturbationSpec) -> BoundCurve {
    let mut acc = l1_diff(&pert.x0, &scenario.x0);
    let mut values = Vec::with_capacity(scenario.horizon + 1);
    values.push(acc);
    for t in 0..scenario.horizon {
        acc += (0..scenario.network.len())
            .map(|i| (pert.inflow_at(i, t) - scenario.inflow_at(i, t)).abs())
            .sum::<f64>();
        values.push(acc);
    }
    BoundCurve::uniform(values, Provenance::Prop3)
}

/// Constant envelopes of the perturbed inflows and initial volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub lambda_hi: Vec<f64>,
    pub lambda_lo: Vec<f64>,
    pub x0_hi: Vec<f64>,
    pub x0_lo: Vec<f64>,
}

pub fn compute_envelope(scenario: &Scenario, pert: &PerturbationSpec) -> Envelope {
    let n = scenario.network.len();
    let steps = scenario.horizon.max(1);
    let mut lambda_hi = vec![0.0; n];
    let mut lambda_lo = vec![0.0; n];
    for &i in &scenario.network.sources {
        let dev = (0..steps)
            .map(|t| (scenario.inflow_at(i, t) - pert.inflow_at(i, t)).abs())
            .fold(0.0, f64::max);
        let (lo, hi) = (0..steps)
            .map(|t| scenario.inflow_at(i, t))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        lambda_hi[i] = hi + dev;
        lambda_lo[i] = (lo - dev).max(0.0);
    }
    let dx: Vec<f64> = scenario.x0.iter().zip(&pert.x0).map(|(a, b)| (a - b).abs()).collect();
    Envelope {
        lambda_hi,
        lambda_lo,
        x0_hi: scenario.x0.iter().zip(&dx).map(|(x, d)| x + d).collect(),
        x0_lo: scenario.x0.iter().zip(&dx).map(|(x, d)| (x - d).max(0.0)).collect(),
    }
}

/// Step-wise bound from the Lipschitz constant `lg` of the dynamics. The
/// inflow deviation is piecewise constant per step and integrated exactly.
pub fn sensitivity_bound(scenario: &Scenario, pert: &PerturbationSpec, lg: f64) -> BoundCurve {
    let dx0 = l1_diff(&pert.x0, &scenario.x0);
    let dl: Vec<f64> = (0..scenario.horizon)
        .map(|t| {
            (0..scenario.network.len())
                .map(|i| (pert.inflow_at(i, t) - scenario.inflow_at(i, t)).abs())
                .sum()
        })
        .collect();
    // ∫_s^{s+1} e^{lg (t−τ)} dτ = e^{lg (t−s−1)} (e^{lg} − 1)/lg.
    let kernel = if lg > 0.0 { lg.exp_m1() / lg } else { 1.0 };
    let values = (0..=scenario.horizon)
        .map(|t| {
            let mut v = if dx0 != 0.0 { (lg * t as f64).exp() * dx0 } else { 0.0 };
            for (s, &d) in dl.iter().enumerate().take(t) {
                if d != 0.0 {
                    v += d * (lg * (t - s - 1) as f64).exp() * kernel;
                }
            }
            v
        })
        .collect();
    BoundCurve::uniform(values, Provenance::Sensitivity)
}

/// Closed form for a constant inflow deviation `dl`: `(e^{Lt} − 1)/L·dl + e^{Lt}·dx0`.
pub fn sensitivity_closed_form(lg: f64, dl: f64, dx0: f64, t: f64) -> f64 {
    let growth = if lg > 0.0 { (lg * t).exp_m1() / lg } else { t };
    growth * dl + (lg * t).exp() * dx0
}

/// `2 (max_i d_i'(0) − min_i s_i'(x_i^jam))`, sources excluded from the supply term.
pub fn lipschitz_constant(network: &Network) -> f64 {
    let max_d = network.cells.iter().map(|c| c.diagram.demand_slope).fold(0.0, f64::max);
    let max_w = network
        .cells
        .iter()
        .filter(|c| !c.diagram.is_source)
        .map(|c| c.diagram.supply_slope)
        .fold(0.0, f64::max);
    2.0 * (max_d + max_w)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Equilibrium {
    Reached { x: Vec<f64>, steps: usize },
    Overload,
}

impl Equilibrium {
    pub fn volumes(&self) -> Option<&[f64]> {
        match self {
            Equilibrium::Reached { x, .. } => Some(x),
            Equilibrium::Overload => None,
        }
    }
}

pub const EQUILIBRIUM_TOL: f64 = 1e-8;
pub const EQUILIBRIUM_MAX_STEPS: usize = 100_000;

/// Fixed point of the dynamics under constant inflow and controls, found by
/// damped iteration from `start`. Capacities are evaluated at `capacity_step`.
pub fn find_equilibrium(
    network: &Network,
    inflow: &[f64],
    controls: &ControlSchedule,
    model: Model,
    start: &[f64],
    capacity_step: usize,
) -> Result<Equilibrium> {
    let routing = controls.routing.at(network, capacity_step);
    let alpha = controls.alpha_at(capacity_step);
    let jam_scale: f64 = network.cells.iter().map(|c| c.diagram.jam_volume).sum::<f64>().max(1.0);
    let mut x = start.to_vec();
    for k in 0..EQUILIBRIUM_MAX_STEPS {
        let inp = StepInputs { alpha, routing: &routing, inflow, t: capacity_step, actuation: controls.actuation };
        let r = ctm::rates(network, model, &x, &inp)?;
        let next = ctm::step(network, &x, &r)?;
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // Half steps: same fixed points, but congested states with steep
        // diagrams would otherwise cycle with period two instead of settling.
        x.iter_mut().zip(&next).for_each(|(a, b)| *a = 0.5 * (*a + b));
        if change <= EQUILIBRIUM_TOL {
            return Ok(Equilibrium::Reached { x, steps: k + 1 });
        }
        if network.sources.iter().any(|&s| x[s] > 1e3 * jam_scale) {
            return Ok(Equilibrium::Overload);
        }
    }
    Ok(Equilibrium::Overload)
}

/// Evaluation context: the nominal scenario, fixed controls and traffic model.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub controls: &'a ControlSchedule,
    pub model: Model,
    /// Step whose controls and capacities stand in for the constant ones in
    /// equilibrium computations.
    pub freeze_step: usize,
}

impl<'a> Context<'a> {
    pub fn new(scenario: &'a Scenario, controls: &'a ControlSchedule, model: Model) -> Self {
        Context { scenario, controls, model, freeze_step: scenario.horizon / 2 }
    }

    pub fn simulate(&self, pert: &PerturbationSpec) -> Result<ctm::Trajectory> {
        ctm::simulate(&pert.apply(self.scenario), Some(self.controls), self.model)
    }

    /// Whether the perturbed trajectory stays in free flow (the hypothesis of
    /// the small-perturbation bounds).
    pub fn free_flow_probe(&self, pert: &PerturbationSpec) -> Result<bool> {
        Ok(self.simulate(pert)?.min_gamma() >= 1.0 - 1e-9)
    }

    pub fn equilibrium(&self, inflow: &[f64], start: &[f64]) -> Result<Equilibrium> {
        find_equilibrium(&self.scenario.network, inflow, self.controls, self.model, start, self.freeze_step)
    }

    /// Constant bound from the equilibria at the envelope inflows, or `None`
    /// when either equilibrium does not exist.
    pub fn bound_prop4(&self, pert: &PerturbationSpec) -> Result<Option<BoundCurve>> {
        let env = compute_envelope(self.scenario, pert);
        let start = &self.scenario.x0;
        let hi = self.equilibrium(&env.lambda_hi, start)?;
        let lo = self.equilibrium(&env.lambda_lo, start)?;
        let (Some(xh), Some(xl)) = (hi.volumes(), lo.volumes()) else {
            return Ok(None);
        };
        let xi_term = [&env.x0_hi, &env.x0_lo]
            .iter()
            .map(|xi| l1_diff(xl, xi) + l1_diff(xh, xi))
            .fold(f64::INFINITY, f64::min);
        let value = l1_diff(xh, xl) + l1_diff(&env.x0_hi, &env.x0_lo) + xi_term;
        Ok(Some(BoundCurve::uniform(vec![value; self.scenario.horizon + 1], Provenance::Prop4)))
    }

    fn single_source(&self) -> Result<usize> {
        match self.scenario.network.sources.as_slice() {
            [s] => Ok(*s),
            other => Err(Error::Config(format!("needs exactly one source, found {}", other.len()))),
        }
    }

    /// Largest constant inflow on the single source whose trajectory stays
    /// in free flow, by bisection to width 1e-3.
    pub fn max_freeflow_inflow(&self) -> Result<f64> {
        let s = self.single_source()?;
        let free = |level: f64| -> Result<bool> { self.free_flow_probe(&self.constant_inflow(s, level)) };
        let nominal = (0..self.scenario.horizon.max(1))
            .map(|t| self.scenario.inflow_at(s, t))
            .fold(0.0, f64::max);
        let (mut lo, mut hi);
        if free(nominal)? {
            lo = nominal;
            hi = nominal.max(1.0);
            while free(hi)? {
                lo = hi;
                hi *= 2.0;
                if hi > 1e9 {
                    return Ok(f64::INFINITY);
                }
            }
        } else {
            lo = 0.0;
            hi = nominal;
            if !free(0.0)? {
                return Ok(0.0);
            }
        }
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if free(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Largest constant source inflow for which the frozen-control dynamics
    /// settle to an equilibrium (the network capacity under the controls),
    /// by bisection to width 1e-3 above `from`.
    pub fn max_equilibrium_inflow(&self, from: f64) -> Result<f64> {
        let s = self.single_source()?;
        let mut base: Vec<f64> = (0..self.scenario.network.len())
            .map(|i| self.scenario.inflow_at(i, self.freeze_step))
            .collect();
        let mut settles = |level: f64| -> Result<bool> {
            base[s] = level;
            Ok(self.equilibrium(&base, &self.scenario.x0)?.volumes().is_some())
        };
        if !settles(from)? {
            return Ok(from);
        }
        let (mut lo, mut hi) = (from, from.max(1.0) * 2.0);
        while settles(hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > 1e9 {
                return Ok(f64::INFINITY);
            }
        }
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if settles(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Inflow beyond which the overload bound takes over. FIFO dynamics are
    /// monotone only in free flow; non-FIFO dynamics are monotone everywhere,
    /// so their bounds hold as long as an equilibrium exists.
    pub fn transition_inflow(&self) -> Result<f64> {
        let free = self.max_freeflow_inflow()?;
        match self.model {
            Model::NonFifo => self.max_equilibrium_inflow(free),
            Model::Fifo | Model::FifoPriority => Ok(free),
        }
    }

    fn constant_inflow(&self, source: usize, level: f64) -> PerturbationSpec {
        let mut p = PerturbationSpec::none(self.scenario);
        p.inflow[source].iter_mut().for_each(|v| *v = level);
        p
    }

    /// Bound at the transition inflow `λ̂` plus linear growth at rate
    /// `‖λ̃ − λ̂‖₁`.
    pub fn overload_bound(&self, pert: &PerturbationSpec, lambda_hat: f64) -> Result<BoundCurve> {
        let s = self.single_source()?;
        let mut at_hat = self.constant_inflow(s, lambda_hat);
        at_hat.x0.clone_from(&pert.x0);
        let base = self.free_flow_bound(&at_hat)?;
        let rate = (0..self.scenario.horizon.max(1))
            .map(|t| (pert.inflow_at(s, t) - lambda_hat).abs())
            .fold(0.0, f64::max);
        let values = base.values.iter().enumerate().map(|(t, v)| v + rate * t as f64).collect();
        Ok(BoundCurve::uniform(values, Provenance::OverloadHeuristic))
    }

    fn free_flow_bound(&self, pert: &PerturbationSpec) -> Result<BoundCurve> {
        let p3 = bound_prop3(self.scenario, pert);
        Ok(match self.bound_prop4(pert)? {
            Some(p4) => p3.min(&p4),
            None => p3,
        })
    }

    /// Minimum of the applicable bounds; switches to the overload bound when
    /// a constant perturbed inflow exceeds `lambda_hat`.
    pub fn combined_bound(&self, pert: &PerturbationSpec, lambda_hat: Option<f64>) -> Result<BoundCurve> {
        if let (Some(hat), Ok(s)) = (lambda_hat, self.single_source()) {
            let series = &pert.inflow[s];
            let constant = series.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12);
            if constant && series.first().is_some_and(|&v| v > hat + 1e-9) {
                return self.overload_bound(pert, hat);
            }
        }
        self.free_flow_bound(pert)
    }
}

/// One grid point of an inflow-perturbation sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub delta: f64,
    /// `Σ_t Σ_i (x̃_i(t) − x_i(t))`.
    pub cost_perturbation: f64,
    /// `Σ_t combined(t)`.
    pub combined_sum: f64,
    pub sensitivity_sum: f64,
    pub min_gamma: f64,
    pub overload: bool,
    pub combined: BoundCurve,
    pub sensitivity: BoundCurve,
    /// `‖x̃(t) − x(t)‖₁` per step.
    pub deviation: Vec<f64>,
    /// Perturbed volumes, kept for cross-model comparisons.
    pub perturbed: Vec<Vec<f64>>,
}

/// Evaluates every `delta` in `grid` (constant offset on the single source).
/// Points are independent and computed in parallel; output order follows `grid`.
pub fn sweep(ctx: &Context, grid: &[f64], jobs: usize) -> Result<Vec<SweepPoint>> {
    use rayon::prelude::*;
    let s = ctx.single_source()?;
    let nominal = ctx.simulate(&PerturbationSpec::none(ctx.scenario))?;
    let lambda_hat = ctx.transition_inflow()?;
    let lg = lipschitz_constant(&ctx.scenario.network);
    let point = |&delta: &f64| -> Result<SweepPoint> {
        let pert = PerturbationSpec::inflow_offset(ctx.scenario, s, delta);
        let traj = ctx.simulate(&pert)?;
        let deviation: Vec<f64> = traj.x.iter().zip(&nominal.x).map(|(a, b)| l1_diff(a, b)).collect();
        let cost_perturbation = traj
            .x
            .iter()
            .zip(&nominal.x)
            .map(|(a, b)| a.iter().sum::<f64>() - b.iter().sum::<f64>())
            .sum();
        let combined = ctx.combined_bound(&pert, Some(lambda_hat))?;
        let sensitivity = sensitivity_bound(ctx.scenario, &pert, lg);
        Ok(SweepPoint {
            delta,
            cost_perturbation,
            combined_sum: combined.sum(),
            sensitivity_sum: sensitivity.sum(),
            min_gamma: traj.min_gamma(),
            overload: combined.provenance.contains(&Provenance::OverloadHeuristic),
            combined,
            sensitivity,
            deviation,
            perturbed: traj.x,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| grid.par_iter().map(point).collect())
}

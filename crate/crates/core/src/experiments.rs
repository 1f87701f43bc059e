//! End-to-end studies on the bundled scenarios: cost tables, optimal
//! trajectories, inflow-perturbation sweeps and the supply-margin tradeoff.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::ctm::{self, CostSpec, Model};
use crate::error::{Error, Result};
use crate::export::{self, num, ArtifactWriter};
use crate::network::{Scenario, SourceActuation};
use crate::presets;
use crate::program::{self, ConvexProgram, ProgramKind};
use crate::robustness::{self, Context, PerturbationSpec, SweepPoint};
use crate::solver::{self, Solution};
use crate::synthesis::{self, ControlSchedule};

/// Prefixes the error message with the pipeline stage, keeping its kind.
pub fn at_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Invalid(m) => Error::Invalid(format!("{stage}: {m}")),
        Error::Config(m) => Error::Config(format!("{stage}: {m}")),
        Error::Solver(m) => Error::Solver(format!("{stage}: {m}")),
        Error::Invariant { step, message } => Error::Invariant { step, message: format!("{stage}: {message}") },
        other => other,
    })
}

/// A solved relaxation together with the controls extracted from it.
#[derive(Clone, Debug)]
pub struct Optimum {
    pub program: ConvexProgram,
    pub solution: Solution,
    pub controls: ControlSchedule,
}

impl Optimum {
    pub fn volumes(&self) -> Vec<Vec<f64>> {
        self.program.volumes(&self.solution.values)
    }
}

/// Solves a relaxation. Linear programs are re-solved for the optimum with
/// the earliest outflows, which removes end-of-horizon degeneracy.
pub fn solve_canonical(
    scenario: &Scenario,
    cost: &CostSpec,
    epsilon: f64,
    kind: ProgramKind,
    actuation: SourceActuation,
) -> Result<Optimum> {
    let program = program::build(scenario, cost, epsilon, kind)?;
    let solution = if program.is_linear() {
        let secondary = synthesis::early_flow_objective(&program, scenario.network.len());
        solver::solve_lexicographic(&program, &secondary)?
    } else {
        solver::solve(&program)?
    };
    if !solution.is_optimal() {
        return Err(Error::Solver(format!("{kind:?} relaxation ended with status {}", solution.status)));
    }
    let controls = synthesis::extract_controls(&program, &solution.values, scenario, actuation)?;
    Ok(Optimum { program, solution, controls })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostRow {
    pub method: &'static str,
    pub cost: &'static str,
    pub value: f64,
}

/// FIFO simulation, DTA and FNC optima under the linear and quadratic costs.
pub fn cost_table(scenario: &Scenario) -> Result<Vec<CostRow>> {
    let fifo = ctm::simulate(scenario, None, Model::Fifo)?;
    let mut rows = Vec::new();
    for (name, cost) in [("TTT", CostSpec::ttt()), ("quadratic", CostSpec::quadratic())] {
        rows.push(CostRow { method: "FIFO", cost: name, value: ctm::evaluate_cost(&scenario.network, &fifo, &cost) });
        for (method, kind) in [("DTA", ProgramKind::Dta), ("FNC", ProgramKind::Fnc)] {
            let p = program::build(scenario, &cost, 0.0, kind)?;
            let sol = solver::solve(&p)?;
            if !sol.is_optimal() {
                return Err(Error::Solver(format!("{method} {name}: status {}", sol.status)));
            }
            rows.push(CostRow { method, cost: name, value: sol.objective });
        }
    }
    Ok(rows)
}

pub fn cost_table_csv(rows: &[CostRow]) -> String {
    let mut out = String::from("method,cost,value [veh*step]\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.method, r.cost, num(r.value)).unwrap();
    }
    out
}

/// Results of the inflow-perturbation study for one model.
#[derive(Clone, Debug)]
pub struct RobustnessRun {
    pub model: Model,
    pub lambda_hat: f64,
    pub nominal_inflow: f64,
    pub points: Vec<SweepPoint>,
}

/// Controls from the FNC (TTT) optimum held fixed while the source inflow is
/// raised by each grid value.
pub fn robustness_controls(scenario: &Scenario, epsilon: f64) -> Result<Optimum> {
    solve_canonical(scenario, &CostSpec::ttt(), epsilon, ProgramKind::Fnc, SourceActuation::SpeedScaling)
}

pub fn robustness_run(
    scenario: &Scenario,
    controls: &ControlSchedule,
    model: Model,
    grid: &[f64],
    jobs: usize,
) -> Result<RobustnessRun> {
    let ctx = Context::new(scenario, controls, model);
    let source = *scenario
        .network
        .sources
        .first()
        .ok_or_else(|| Error::Config("scenario has no source".into()))?;
    let nominal_inflow = scenario.inflow_at(source, 0);
    Ok(RobustnessRun {
        model,
        lambda_hat: ctx.transition_inflow()?,
        nominal_inflow,
        points: robustness::sweep(&ctx, grid, jobs)?,
    })
}

/// `start, start+step, …` up to `end` inclusive, computed by index to avoid drift.
pub fn grid(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::Config(format!("bad grid {start}:{step}:{end}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| {
        let v = start + step * k as f64;
        (v * 1e9).round() / 1e9
    }).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub delta: f64,
    /// `Σ_{t=0..T} Σ_i x̃_i(t)`.
    pub cost: f64,
    /// Minimum FIFO coefficient over cells and steps.
    pub gamma: f64,
}

/// For each supply margin ε: FNC controls, then FIFO simulation under every
/// inflow offset in `deltas`. Output is ordered by (ε, Δλ).
pub fn epsilon_tradeoff(scenario: &Scenario, epsilons: &[f64], deltas: &[f64], jobs: usize) -> Result<Vec<TradeoffPoint>> {
    let source = *scenario
        .network
        .sources
        .first()
        .ok_or_else(|| Error::Config("scenario has no source".into()))?;
    let run = |&eps: &f64| -> Result<Vec<TradeoffPoint>> {
        let opt = robustness_controls(scenario, eps)?;
        deltas
            .iter()
            .map(|&delta| {
                let pert = PerturbationSpec::inflow_offset(scenario, source, delta);
                let traj = ctm::simulate(&pert.apply(scenario), Some(&opt.controls), Model::Fifo)?;
                let cost = traj.x.iter().flatten().sum();
                Ok(TradeoffPoint { epsilon: eps, delta, cost, gamma: traj.min_gamma() })
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let nested: Vec<Vec<TradeoffPoint>> = pool.install(|| epsilons.par_iter().map(run).collect::<Result<_>>())?;
    Ok(nested.into_iter().flatten().collect())
}

pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from("epsilon [1],delta_lambda [veh/step],cost [veh*step],gamma [1]\n");
    for p in points {
        writeln!(out, "{},{},{},{}", num(p.epsilon), num(p.delta), num(p.cost), num(p.gamma)).unwrap();
    }
    out
}

pub const EPSILONS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Clone, Debug)]
pub struct Summary {
    pub costs: Vec<CostRow>,
    pub robustness: Vec<RobustnessRun>,
    pub tradeoff: Vec<TradeoffPoint>,
    pub manifest: std::path::PathBuf,
}

/// Runs every study on the bundled scenarios and writes CSVs plus a manifest
/// into `out`.
pub fn reproduce(out: &Path, jobs: usize) -> Result<Summary> {
    let mut w = ArtifactWriter::new(out)?;
    let pulse = at_stage("load pulse scenario", presets::pulse_bottleneck())?;
    let constant = at_stage("load constant-inflow scenario", presets::constant_inflow())?;
    let net = &pulse.network;

    let costs = at_stage("cost tables", cost_table(&pulse))?;
    w.write("tables2_3.csv", &cost_table_csv(&costs))?;

    let first_four: Vec<usize> = (1..=4).filter_map(|id| net.index_of(id)).collect();
    let fifo = at_stage("FIFO simulation", ctm::simulate(&pulse, None, Model::Fifo))?;
    w.write("fig6_7/fifo_volumes.csv", &export::volumes_csv(net, &fifo.x, &first_four))?;
    w.write("fig6_7/fifo_trajectory.csv", &export::trajectory_csv(net, &fifo))?;
    for (name, kind) in [("dta", ProgramKind::Dta), ("fnc", ProgramKind::Fnc)] {
        let opt = at_stage(
            &format!("{name} optimum"),
            solve_canonical(&pulse, &CostSpec::ttt(), 0.0, kind, SourceActuation::RampMeter),
        )?;
        w.write(&format!("fig6_7/{name}_volumes.csv"), &export::volumes_csv(net, &opt.volumes(), &first_four))?;
        w.write(&format!("fig6_7/{name}_alpha.csv"), &export::alpha_csv(net, &opt.controls))?;
        w.write(
            &format!("fig6_7/{name}_routing.csv"),
            &export::routing_csv(net, &opt.controls, pulse.horizon),
        )?;
    }

    let deltas = grid(0.0, 0.1, 3.0)?;
    let opt = at_stage("robustness controls", robustness_controls(&constant, 0.0))?;
    let mut runs = Vec::new();
    for model in [Model::Fifo, Model::NonFifo] {
        let run = at_stage(
            &format!("{model} robustness sweep"),
            robustness_run(&constant, &opt.controls, model, &deltas, jobs),
        )?;
        w.write(&format!("fig8_9/{model}_sweep.csv"), &export::sweep_csv(&run.points, &model.to_string()))?;
        for p in run.points.iter().filter(|p| [0.5, 2.0].contains(&p.delta)) {
            w.write(&format!("fig8_9/{model}_bound_dl{}.csv", num(p.delta)), &export::bound_csv(&p.combined))?;
            w.write(
                &format!("fig8_9/{model}_sensitivity_dl{}.csv", num(p.delta)),
                &export::bound_csv(&p.sensitivity),
            )?;
        }
        runs.push(run);
    }
    let mut hats = String::from("model,nominal_inflow [veh/step],lambda_hat [veh/step],delta_lambda_hat [veh/step]\n");
    for r in &runs {
        writeln!(hats, "{},{},{},{}", r.model, num(r.nominal_inflow), num(r.lambda_hat), num(r.lambda_hat - r.nominal_inflow))
            .unwrap();
    }
    w.write("fig8_9/transition.csv", &hats)?;

    let tradeoff = at_stage("epsilon tradeoff", epsilon_tradeoff(&pulse, &EPSILONS, &deltas, jobs))?;
    w.write("fig10/tradeoff.csv", &tradeoff_csv(&tradeoff))?;

    let manifest = w.finish()?;
    Ok(Summary { costs, robustness: runs, tradeoff, manifest })
}

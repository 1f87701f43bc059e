use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ctmopt::ctm::{self, CostKind, CostSpec, Model};
use ctmopt::experiments::{self, at_stage};
use ctmopt::export::{self, ArtifactWriter};
use ctmopt::io::load_scenario;
use ctmopt::network::{validate, Scenario, SourceActuation};
use ctmopt::program::ProgramKind;
use ctmopt::synthesis;
use ctmopt::Error;

#[derive(Parser)]
#[command(name = "ctmopt", version, about = "Cell Transmission Model simulation, optimal control and robustness analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario without control.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModelArg::Fifo)]
        model: ModelArg,
    },
    /// Solve the DTA or FNC relaxation.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        relax: Relaxation,
    },
    /// Solve, extract controls and verify them by replay.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        relax: Relaxation,
        #[arg(long, value_enum, default_value_t = ModelArg::Fifo)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = ActuationArg::RampMeter)]
        actuation: ActuationArg,
    },
    /// Perturb the source inflow under fixed FNC controls and evaluate the bounds.
    RobustnessSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModelArg::Fifo)]
        model: ModelArg,
        /// Inflow offsets as START:STEP:END.
        #[arg(long, default_value = "0:0.1:3")]
        sweep: String,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Regenerate every table and figure data set from the bundled scenarios.
    ReproducePaper {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Relaxation {
    #[arg(long, value_enum, default_value_t = CostArg::Ttt)]
    cost: CostArg,
    #[arg(long, value_enum, default_value_t = KindArg::Fnc)]
    kind: KindArg,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Ttt,
    Ttd,
    Delay,
    Quad,
}

impl CostArg {
    fn spec(self) -> CostSpec {
        CostSpec::new(match self {
            CostArg::Ttt => CostKind::Ttt,
            CostArg::Ttd => CostKind::Ttd,
            CostArg::Delay => CostKind::Delay,
            CostArg::Quad => CostKind::QuadraticVolume,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Fifo,
    FifoPriority,
    Nonfifo,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::Fifo => Model::Fifo,
            ModelArg::FifoPriority => Model::FifoPriority,
            ModelArg::Nonfifo => Model::NonFifo,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Dta,
    Fnc,
}

impl From<KindArg> for ProgramKind {
    fn from(k: KindArg) -> ProgramKind {
        match k {
            KindArg::Dta => ProgramKind::Dta,
            KindArg::Fnc => ProgramKind::Fnc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ActuationArg {
    RampMeter,
    SpeedScaling,
}

impl From<ActuationArg> for SourceActuation {
    fn from(a: ActuationArg) -> SourceActuation {
        match a {
            ActuationArg::RampMeter => SourceActuation::RampMeter,
            ActuationArg::SpeedScaling => SourceActuation::SpeedScaling,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Config(_) | Error::Io(_) | Error::Parse(_) => 2,
        Error::Solver(_) => 3,
        Error::Invariant { .. } => 4,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Invalid(_) => "invalid",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
        Error::Solver(_) => "solver",
        Error::Invariant { .. } => "invariant",
    }
}

fn load(path: &Path) -> Result<Scenario, Error> {
    let s = at_stage("load scenario", load_scenario(path))?;
    at_stage("validate scenario", validate(&s).into_result())?;
    Ok(s)
}

fn finish(mut w: ArtifactWriter, summary: Value) -> Result<Value, Error> {
    w.write("summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    w.finish()?;
    Ok(summary)
}

fn run(cli: Cli) -> Result<Value, Error> {
    match cli.command {
        Command::Simulate { common, model } => {
            let s = load(&common.scenario)?;
            let traj = at_stage("simulate", ctm::simulate(&s, None, model.into()))?;
            let mut w = ArtifactWriter::new(&common.out)?;
            w.write("trajectory.csv", &export::trajectory_csv(&s.network, &traj))?;
            let summary = json!({
                "command": "simulate",
                "model": Model::from(model).to_string(),
                "ttt": ctm::evaluate_cost(&s.network, &traj, &CostSpec::ttt()),
                "min_gamma": traj.min_gamma(),
            });
            finish(w, summary)
        }
        Command::Solve { common, relax } => {
            let s = load(&common.scenario)?;
            let p = at_stage(
                "build program",
                ctmopt::program::build(&s, &relax.cost.spec(), relax.epsilon, relax.kind.into()),
            )?;
            let sol = at_stage("solve", ctmopt::solver::solve(&p))?;
            let mut w = ArtifactWriter::new(&common.out)?;
            w.write("program.lp", &p.to_lp_format())?;
            let mut values = String::new();
            for (k, v) in sol.values.iter().enumerate() {
                values.push_str(&format!("{} {}\n", p.var_name(k), export::num(*v)));
            }
            w.write("solution.txt", &values)?;
            let cells: Vec<usize> = (0..s.network.len()).collect();
            w.write("volumes.csv", &export::volumes_csv(&s.network, &p.volumes(&sol.values), &cells))?;
            let summary = json!({
                "command": "solve",
                "status": sol.status.to_string(),
                "objective": sol.objective,
                "dual_objective": sol.dual_objective,
                "primal_residual": sol.residuals.primal,
                "dual_residual": sol.residuals.dual,
                "iterations": sol.iterations,
                "certificate": sol.certificate,
            });
            let summary = finish(w, summary)?;
            if !sol.is_optimal() {
                return Err(Error::Solver(format!("solver ended with status {}", sol.status)));
            }
            Ok(summary)
        }
        Command::Synthesize { common, relax, model, actuation } => {
            let s = load(&common.scenario)?;
            let opt = at_stage(
                "solve",
                experiments::solve_canonical(&s, &relax.cost.spec(), relax.epsilon, relax.kind.into(), actuation.into()),
            )?;
            let rep = at_stage(
                "replay",
                synthesis::verify_realization(&opt.controls, &s, &opt.volumes(), model.into()),
            )?;
            let mut w = ArtifactWriter::new(&common.out)?;
            w.write("alpha.csv", &export::alpha_csv(&s.network, &opt.controls))?;
            w.write("routing.csv", &export::routing_csv(&s.network, &opt.controls, s.horizon))?;
            w.write("replay_trajectory.csv", &export::trajectory_csv(&s.network, &rep.trajectory))?;
            let summary = json!({
                "command": "synthesize",
                "objective": opt.solution.objective,
                "max_deviation": rep.max_deviation,
                "tolerance": rep.tolerance,
                "free_flow": rep.all_free_flow(),
                "demand_identity": rep.demand_identity,
                "passed": rep.passed(),
            });
            let summary = finish(w, summary)?;
            if !rep.passed() {
                return Err(Error::Invariant {
                    step: 0,
                    message: format!("replay deviates by {} (tolerance {})", rep.max_deviation, rep.tolerance),
                });
            }
            Ok(summary)
        }
        Command::RobustnessSweep { common, model, sweep, epsilon, jobs } => {
            let s = load(&common.scenario)?;
            let grid = parse_sweep(&sweep)?;
            let opt = at_stage("robustness controls", experiments::robustness_controls(&s, epsilon))?;
            let run = at_stage(
                "robustness sweep",
                experiments::robustness_run(&s, &opt.controls, model.into(), &grid, jobs),
            )?;
            let mut w = ArtifactWriter::new(&common.out)?;
            let name = Model::from(model).to_string();
            w.write("sweep.csv", &export::sweep_csv(&run.points, &name))?;
            let summary = json!({
                "command": "robustness-sweep",
                "model": name,
                "lambda_hat": run.lambda_hat,
                "delta_lambda_hat": run.lambda_hat - run.nominal_inflow,
                "points": run.points.len(),
            });
            finish(w, summary)
        }
        Command::ReproducePaper { out, jobs } => {
            let sum = experiments::reproduce(&out, jobs)?;
            let costs: Vec<Value> = sum
                .costs
                .iter()
                .map(|r| json!({"method": r.method, "cost": r.cost, "value": r.value}))
                .collect();
            let hats: Vec<Value> = sum
                .robustness
                .iter()
                .map(|r| json!({"model": r.model.to_string(), "delta_lambda_hat": r.lambda_hat - r.nominal_inflow}))
                .collect();
            Ok(json!({
                "command": "reproduce-paper",
                "costs": costs,
                "transitions": hats,
                "manifest": sum.manifest,
            }))
        }
    }
}

fn parse_sweep(text: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("--sweep '{text}' must be START:STEP:END")))?;
    match nums.as_slice() {
        [a, b, c] => experiments::grid(*a, *b, *c),
        _ => Err(Error::Config(format!("--sweep '{text}' must be START:STEP:END"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            // A closed pipe on stdout is not a failure of the run itself.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = json!({"error": error_kind(&e), "message": e.to_string(), "exit_code": exit_code(&e)});
            eprintln!("{record}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Command-line front end for long-run CVaR and mean-CVaR maximization.

mod output;
mod policy_file;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cvar_mdp::chains::{check_assumption, is_communicating, polytope_vertices, DEFAULT_POLICY_CAP};
use cvar_mdp::evaluate::{
    cvar_sequence, limsup_liminf_estimate, monte_carlo_eval, Example1Schedule,
};
use cvar_mdp::lp::{build_dual_lp, write_lp_format, DualLpOptions, TailRows};
use cvar_mdp::model::{
    builtin, load, random_instance, to_json_string, validate, MarkovPolicy, MdpInstance,
    StationaryPolicy, RANDOMIZATION_TOL,
};
use cvar_mdp::risk::RiskParams;
use cvar_mdp::solver::{
    endpoint_scan_oracle, enumerate_deterministic, solve_cvar, SolveMode, SolverOptions,
};
use cvar_mdp::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "cvar-mdp", version)]
#[command(about = "Maximize the long-run CVaR or mean-CVaR of rewards in finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an optimal stationary randomized policy and certify it
    Solve(SolveArgs),
    /// Evaluate every stationary deterministic policy
    Enumerate(RiskArgs),
    /// Exact per-step CVaR sequence and Cesàro averages of a policy
    Simulate(SimulateArgs),
    /// Validate an instance and check the unichain/aperiodic assumption
    Check(CheckArgs),
    /// Write a random instance
    Gen(GenArgs),
    /// Upper envelope max_x v(x, y) at every reward value y
    Scan(RiskArgs),
    /// Extreme points of the stationary-distribution polytope
    Vertices(VerticesArgs),
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct Source {
    /// Builtin instance: example1, example2 or endowment
    #[arg(long)]
    builtin: Option<String>,
    /// Instance file (JSON)
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Random instance as SEED,STATES,ACTIONS
    #[arg(long, value_name = "SEED,STATES,ACTIONS")]
    gen: Option<String>,
}

impl Source {
    fn load(&self) -> cvar_mdp::Result<MdpInstance> {
        if let Some(name) = &self.builtin {
            return builtin(name);
        }
        if let Some(path) = &self.instance {
            return load(path);
        }
        let spec = self.gen.as_deref().expect("clap enforces one source");
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let bad =
            || Error::InvalidParameter(format!("--gen expects SEED,STATES,ACTIONS, got `{spec}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let seed: u64 = parts[0].parse().map_err(|_| bad())?;
        let states: usize = parts[1].parse().map_err(|_| bad())?;
        let actions: usize = parts[2].parse().map_err(|_| bad())?;
        random_instance(seed, states, actions, GEN_REWARDS)
    }
}

const GEN_REWARDS: (f64, f64) = (0.0, 100.0);

#[derive(Args, Clone)]
struct RiskArgs {
    #[command(flatten)]
    source: Source,
    /// Probability level α in [0, 1)
    #[arg(long)]
    alpha: f64,
    /// Weight β ≥ 0 of the long-run mean
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Structured (JSON) output
    #[arg(long)]
    json: bool,
    /// Proceed even if the unichain/aperiodic check fails
    #[arg(long)]
    waive_assumption: bool,
}

impl RiskArgs {
    fn params(&self) -> cvar_mdp::Result<RiskParams> {
        RiskParams::new(self.alpha, self.beta)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dual,
    DualPrimal,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    risk: RiskArgs,
    #[arg(long, value_enum, default_value = "dual")]
    mode: ModeArg,
    /// Probability below which an action counts as unused
    #[arg(long, default_value_t = RANDOMIZATION_TOL)]
    tol: f64,
    /// One tail row per state-action pair instead of per distinct reward
    #[arg(long)]
    per_pair_tails: bool,
    /// Also write the dual program in LP file format
    #[arg(long, value_name = "PATH")]
    lp_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    alpha: f64,
    /// Horizon: number of steps
    #[arg(long = "T", value_name = "STEPS")]
    horizon: usize,
    /// `example1`, `uniform`, `optimal`, or a policy file (JSON)
    #[arg(long, default_value = "uniform")]
    policy: String,
    /// Initial state name (default: first state)
    #[arg(long)]
    initial_state: Option<String>,
    /// Trailing window for the limsup/liminf estimates (default: T/2)
    #[arg(long)]
    window: Option<usize>,
    /// Also run this many Monte Carlo replications
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the t,cvar_t,cesaro_t sequence to this file instead of stdout
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long, default_value_t = GEN_REWARDS.0, allow_negative_numbers = true)]
    min_reward: f64,
    #[arg(long, default_value_t = GEN_REWARDS.1, allow_negative_numbers = true)]
    max_reward: f64,
    /// Output file (default: stdout)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerticesArgs {
    #[command(flatten)]
    source: Source,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::SchemaVersion { .. }
            | Error::InvalidInstance(_)
            | Error::InvalidPolicy(_)
            | Error::InvalidParameter(_)
            | Error::UnknownBuiltin(_)
            | Error::EnumerationCap { .. }
            | Error::HorizonExceeded { .. }
            | Error::Assumption(_) => EXIT_INPUT,
            Error::NotUnichain { .. }
            | Error::LpStatus(_)
            | Error::Numerical(_)
            | Error::Inconsistent(_) => EXIT_SOLVER,
        };
        let mut message = e.to_string();
        if matches!(e, Error::Assumption(_)) {
            message.push_str("; rerun with --waive-assumption to solve anyway");
        }
        Failure { code, message }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn load_valid(source: &Source) -> Result<MdpInstance, Failure> {
    let instance = source.load()?;
    let report = validate(&instance);
    if !report.is_valid() {
        let lines: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(input_error(format!(
            "invalid instance:\n  {}",
            lines.join("\n  ")
        )));
    }
    Ok(instance)
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("JSON values serialize")
    );
}

fn cmd_solve(args: &SolveArgs) -> CmdResult {
    let instance = load_valid(&args.risk.source)?;
    let params = args.risk.params()?;
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(input_error(format!(
            "--tol must be a nonnegative number, got {}",
            args.tol
        )));
    }
    let tail_rows = if args.per_pair_tails {
        TailRows::PerPair
    } else {
        TailRows::DistinctValues
    };
    let options = SolverOptions {
        mode: match args.mode {
            ModeArg::Dual => SolveMode::DualOnly,
            ModeArg::DualPrimal => SolveMode::DualPrimal,
        },
        tail_rows,
        waive_assumption: args.risk.waive_assumption,
        policy_cap: DEFAULT_POLICY_CAP,
        randomization_tol: args.tol,
    };
    if let Some(path) = &args.lp_out {
        let lp = build_dual_lp(&instance, &params, &DualLpOptions { tail_rows })?;
        fs::write(path, write_lp_format(&lp)).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    let sol = solve_cvar(&instance, &params, &options)?;
    if args.risk.json {
        print_json(&output::solution_json(&instance, &sol));
    } else {
        print!("{}", output::solution_table(&instance, &sol));
    }
    Ok(())
}

fn cmd_enumerate(args: &RiskArgs) -> CmdResult {
    let instance = load_valid(&args.source)?;
    let params = args.params()?;
    let table = enumerate_deterministic(&instance, &params, DEFAULT_POLICY_CAP)?;
    let options = SolverOptions {
        waive_assumption: args.waive_assumption,
        ..SolverOptions::default()
    };
    let v_star = solve_cvar(&instance, &params, &options)?.v_star;
    if args.json {
        print_json(&output::enumeration_json(&instance, &table, v_star));
    } else {
        print!("{}", output::enumeration_table(&instance, &table, v_star));
    }
    Ok(())
}

fn cmd_scan(args: &RiskArgs) -> CmdResult {
    let instance = load_valid(&args.source)?;
    let params = args.params()?;
    let scan = endpoint_scan_oracle(&instance, &params)?;
    if args.json {
        print_json(&serde_json::to_value(&scan).expect("scan serializes"));
    } else {
        print!("{}", output::scan_table(&scan));
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let instance = load_valid(&args.source)?;
    if args.horizon == 0 {
        return Err(input_error("--T must be at least 1"));
    }
    let s0 = match &args.initial_state {
        None => 0,
        Some(name) => instance
            .state_index(name)
            .ok_or_else(|| input_error(format!("unknown initial state `{name}`")))?,
    };
    let schedule;
    let stationary;
    let policy: &(dyn MarkovPolicy + Sync) = match args.policy.as_str() {
        "example1" => {
            schedule = Example1Schedule::new(&instance)?;
            &schedule
        }
        "uniform" => {
            stationary = StationaryPolicy::uniform(&instance);
            &stationary
        }
        "optimal" => {
            let params = RiskParams::cvar(args.alpha)?;
            let options = SolverOptions {
                waive_assumption: true,
                ..SolverOptions::default()
            };
            stationary = solve_cvar(&instance, &params, &options)?.policy;
            &stationary
        }
        path => {
            stationary = policy_file::load(&instance, path)?;
            &stationary
        }
    };
    let seq = cvar_sequence(&instance, policy, s0, args.horizon, args.alpha)?;
    let window = args.window.unwrap_or((args.horizon / 2).max(1));
    let estimate = limsup_liminf_estimate(&seq, window)?;
    let monte_carlo = match args.replications {
        Some(n) => Some(monte_carlo_eval(
            &instance,
            policy,
            s0,
            args.horizon,
            n,
            args.seed,
            args.alpha,
        )?),
        None => None,
    };
    if let Some(path) = &args.csv {
        let file = fs::File::create(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        seq.write_csv(std::io::BufWriter::new(file))
            .map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
    }
    if args.json {
        let mut value = json!({
            "policy": seq.policy,
            "alpha": seq.alpha,
            "initial_state": instance.states()[s0],
            "estimate": estimate,
            "per_step": seq.per_step,
            "cesaro": seq.cesaro,
        });
        if let Some(mc) = &monte_carlo {
            value["monte_carlo"] = json!({
                "replications": mc.replications,
                "seed": mc.seed,
                "per_step": mc.per_step,
            });
        }
        print_json(&value);
    } else {
        if args.csv.is_none() {
            seq.write_csv(std::io::stdout().lock())
                .expect("stdout is writable");
        }
        eprintln!(
            "window {}: max Cesàro average {:.4}, min {:.4}",
            estimate.window, estimate.limsup, estimate.liminf
        );
        if let Some(mc) = &monte_carlo {
            let worst = seq
                .per_step
                .iter()
                .zip(&mc.per_step)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            eprintln!(
                "monte carlo ({} replications, seed {}): max per-step deviation {:.4}",
                mc.replications, mc.seed, worst
            );
        }
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> CmdResult {
    let instance = args.source.load()?;
    let report = validate(&instance);
    if !report.is_valid() {
        if args.json {
            print_json(&json!({ "valid": false, "violations": report.violations }));
        } else {
            println!("instance `{}` is invalid:", instance.name());
            for v in &report.violations {
                println!("  {v}");
            }
        }
        return Err(input_error("instance failed validation"));
    }
    let assumption = check_assumption(&instance, DEFAULT_POLICY_CAP)?;
    let communicating = is_communicating(&instance);
    if args.json {
        let violators: Vec<_> = assumption
            .violators
            .iter()
            .map(|v| {
                json!({
                    "policy": v.policy.describe(&instance),
                    "recurrent_classes": v.classification.recurrent_classes.len(),
                    "aperiodic": v.classification.aperiodic,
                })
            })
            .collect();
        print_json(&json!({
            "valid": true,
            "policies_checked": assumption.policies_checked,
            "assumption_holds": assumption.holds(),
            "communicating": communicating,
            "violators": violators,
        }));
    } else {
        print!(
            "{}",
            output::check_table(&instance, &assumption, communicating)
        );
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> CmdResult {
    let instance = random_instance(
        args.seed,
        args.states,
        args.actions,
        (args.min_reward, args.max_reward),
    )?;
    let text = to_json_string(&instance);
    match &args.out {
        Some(path) => fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_vertices(args: &VerticesArgs) -> CmdResult {
    let instance = load_valid(&args.source)?;
    let vertices = polytope_vertices(&instance, DEFAULT_POLICY_CAP)?;
    print_json(&output::vertices_json(&instance, &vertices));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Enumerate(args) => cmd_enumerate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Check(args) => cmd_check(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Vertices(args) => cmd_vertices(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

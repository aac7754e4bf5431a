use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DVector, Vector2};

use aslip::bench::{bench_planner, horizon_sweep};
use aslip::gait::Side;
use aslip::qp::QpSolver;
use aslip::report::{summarize, write_csv};
use aslip::scenario::Scenario;
use aslip::sim::run_scenario;
use aslip::wbc::{com_kinematics, forward_dynamics, solve_wbc, standing_pose, standing_problem, SliderParams, WbcParams};

const EXIT_FALL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

/// Reactive biped walking on an actuated spring-loaded pendulum.
///
/// Log verbosity follows the ASLIP_LOG environment variable
/// (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the 1 kHz log as CSV.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the planning tick with the default parameters.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        /// Also sweep the footstep horizon from 1 to 8 steps.
        #[arg(long)]
        sweep: bool,
    },
    /// Solve the whole-body QP for a standing pose on the test model.
    WbcDemo,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASLIP_LOG", "warn")).init();
    match Cli::parse().command {
        Command::Run { scenario, out } => run(&scenario, &out),
        Command::Bench { iters, sweep } => bench(iters, sweep),
        Command::WbcDemo => wbc_demo(),
    }
}

fn run(scenario: &std::path::Path, out: &std::path::Path) -> ExitCode {
    let scenario = match Scenario::from_path(scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let log = match run_scenario(&scenario) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let written = std::fs::File::create(out)
        .map_err(csv::Error::from)
        .and_then(|f| write_csv(&log, std::io::BufWriter::new(f)));
    if let Err(e) = written {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    let _ = writeln!(std::io::stdout().lock(), "{}", summarize(&log, 5));
    if log.fell() {
        ExitCode::from(EXIT_FALL)
    } else {
        ExitCode::SUCCESS
    }
}

fn bench(iters: usize, sweep: bool) -> ExitCode {
    let defaults = Scenario::default();
    let report = match bench_planner(&defaults.vertical, &defaults.horizontal, iters) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "iterations: {}", report.iterations);
    for (name, p) in [("cold", report.cold), ("warm", report.warm)] {
        let _ = writeln!(out, "{name}: p50={:.1} us p95={:.1} us p99={:.1} us max={:.1} us", p.p50, p.p95, p.p99, p.max);
    }
    if sweep {
        let rows = horizon_sweep(&defaults.vertical, &defaults.horizontal, 1..=8, iters).expect("default parameters");
        for (n, p) in rows {
            let _ = writeln!(out, "horizon {n}: p50={:.1} us p99={:.1} us", p.p50, p.p99);
        }
    }
    ExitCode::SUCCESS
}

fn wbc_demo() -> ExitCode {
    let params = SliderParams::default();
    let wbc = WbcParams::default();
    let q = standing_pose(0.7, 0.15);
    let q_dot = DVector::zeros(q.len());
    let com = com_kinematics(&params, &q, &q_dot).position;
    let stance = [Side::Left, Side::Right];
    let mut solver = QpSolver::new();
    let mut out = std::io::stdout().lock();
    for (label, ff) in [("hold", Vector2::zeros()), ("accelerate", Vector2::new(1.0, 0.0))] {
        let solved = standing_problem(&wbc, &params, &q, &q_dot, &stance, com, ff)
            .and_then(|problem| solve_wbc(&mut solver, &problem).map(|sol| (problem, sol)));
        let (problem, sol) = match solved {
            Ok(s) => s,
            Err(e) => {
                eprintln!("wbc solve failed: {e}");
                return ExitCode::FAILURE;
            }
        };
        let replay = forward_dynamics(&problem.model, &sol.torques, &sol.forces).map(|qdd| (qdd - &sol.q_ddot).amax());
        let _ = writeln!(out, "{label}: com accel ff = ({:.2}, {:.2}) m/s^2", ff[0], ff[1]);
        let _ = writeln!(out, "  forces [fx fz] left = ({:.3}, {:.3}) N, right = ({:.3}, {:.3}) N", sol.forces[0], sol.forces[1], sol.forces[2], sol.forces[3]);
        let _ = writeln!(out, "  sum fz = {:.6} N (weight {:.6} N)", sol.forces[1] + sol.forces[3], params.total_mass() * params.gravity);
        let _ = writeln!(out, "  torques [hip slide] left = ({:.3}, {:.3}), right = ({:.3}, {:.3})", sol.torques[0], sol.torques[1], sol.torques[2], sol.torques[3]);
        if let Ok(r) = replay {
            let _ = writeln!(out, "  forward-dynamics replay residual = {r:.2e}");
        }
    }
    ExitCode::SUCCESS
}

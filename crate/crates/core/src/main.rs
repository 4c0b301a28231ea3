use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use polyvsi::bench::{
    build_benchmark, parse_grid, read_snapshot, write_atomic, write_currents, write_power_flow, write_snapshot,
    write_trace, write_vsi_report, GridBundle, BENCHMARK_GRID,
};
use polyvsi::continuation::{run_cpf, CpfConfig, Termination};
use polyvsi::grid::{phase_label, validate_parameters, DEFAULT_TOLERANCE};
use polyvsi::newton::{DEFAULT_EPS, DEFAULT_MAX_ITER};
use polyvsi::power_flow::PowerFlowSystem;
use polyvsi::{Error, Result};

#[derive(Parser)]
#[command(name = "polyvsi", version, about = "Voltage stability index for unbalanced polyphase grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a grid file and check the branch and slack parameters.
    Validate { grid: PathBuf },
    /// Solve the power flow at one loading.
    Pf {
        grid: PathBuf,
        #[arg(long)]
        xi: f64,
        /// Node voltages and residual mismatch.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Branch series currents.
        #[arg(long)]
        currents: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Trace the nose curve up to the loadability limit.
    Cpf {
        grid: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 500)]
        max_steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Voltage snapshot of the last sample before the fold.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Evaluate the stability index for a given voltage snapshot.
    Vsi {
        grid: PathBuf,
        #[arg(long)]
        voltages: PathBuf,
        /// Loading at which the snapshot was taken.
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bundled benchmark feeder.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Subcommand)]
enum BenchAction {
    /// Write the benchmark grid file.
    Emit { path: PathBuf },
}

fn load(path: &Path) -> Result<GridBundle> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("grid file {} not found", path.display()),
        )));
    }
    parse_grid(path)?.to_models()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { grid } => {
            let desc = parse_grid(&grid)?;
            let bundle = desc.to_models();
            match bundle {
                Ok(b) => {
                    let violations = validate_parameters(&b.grid, DEFAULT_TOLERANCE);
                    println!(
                        "{} nodes, {} branches, {} slack(s), {} resource(s)",
                        b.grid.nodes().len(),
                        b.grid.branches().len(),
                        b.slacks.len(),
                        b.resources.len()
                    );
                    if !violations.is_empty() {
                        return Err(Error::Validation(violations.iter().map(ToString::to_string).collect()));
                    }
                    PowerFlowSystem::new(&b.grid, &b.slacks, &b.resources)?;
                    println!("ok");
                    Ok(())
                }
                Err(e) => Err(e),
            }
        }
        Command::Pf { grid, xi, out, currents, eps, max_iter } => {
            let b = load(&grid)?;
            let sys = PowerFlowSystem::new(&b.grid, &b.slacks, &b.resources)?;
            let sol = sys.solve_by_loading(xi, eps, max_iter)?;
            let mismatch = sys.mismatch(&sol.point)?;
            println!(
                "converged at xi = {xi} in {} iterations, max mismatch {:.3e} VA",
                sol.report.iterations,
                mismatch.inf_norm()
            );
            match sys.vsi(&sol.point) {
                Ok(v) => println!(
                    "global L = {:.6} at node {} phase {}",
                    v.global,
                    v.critical.node,
                    phase_label(v.critical.phase)
                ),
                Err(e) => log::warn!("index not evaluated: {e}"),
            }
            if let Some(path) = out {
                write_power_flow(&path, &sol.point, &mismatch)?;
            }
            if let Some(path) = currents {
                write_currents(&path, &sys.branch_currents(&sol.point)?, &b.rated_currents)?;
            }
            Ok(())
        }
        Command::Cpf { grid, sigma, eps, max_steps, out, snapshot } => {
            let b = load(&grid)?;
            let sys = PowerFlowSystem::new(&b.grid, &b.slacks, &b.resources)?;
            let cfg = CpfConfig { sigma, eps, max_steps, ..CpfConfig::default() };
            let started = Instant::now();
            let trace = match run_cpf(&sys, &cfg) {
                Ok(t) => t,
                Err(Error::StepLimitReached(t)) => {
                    if let Some(path) = &out {
                        write_trace(path, &t)?;
                    }
                    return Err(Error::StepLimitReached(t));
                }
                Err(e) => return Err(e),
            };
            let last = trace.last_before_fold().expect("trace holds the base case");
            println!("xi_max = {:.6}", trace.xi_max());
            println!(
                "samples = {}, termination = {}, elapsed = {:.2} s",
                trace.samples.len(),
                match trace.termination {
                    Termination::FoldDetected => "fold",
                    Termination::StepLimit => "step limit",
                    Termination::CorrectorFailure => "corrector failure",
                },
                started.elapsed().as_secs_f64()
            );
            if let Some(v) = &last.vsi {
                println!(
                    "global L = {:.6} at node {} phase {}",
                    v.global,
                    v.critical.node,
                    phase_label(v.critical.phase)
                );
            }
            if let Some(path) = out {
                write_trace(&path, &trace)?;
            }
            if let Some(path) = snapshot {
                write_snapshot(&path, &last.point)?;
            }
            if trace.termination == Termination::CorrectorFailure {
                log::warn!("continuation ended on corrector failure before a fold was detected");
            }
            Ok(())
        }
        Command::Vsi { grid, voltages, xi, out } => {
            let b = load(&grid)?;
            let sys = PowerFlowSystem::new(&b.grid, &b.slacks, &b.resources)?;
            let op = read_snapshot(&voltages, xi)?;
            let result = sys.vsi(&op)?;
            println!(
                "global L = {:.6} at node {} phase {}",
                result.global,
                result.critical.node,
                phase_label(result.critical.phase)
            );
            if let Some(path) = out {
                write_vsi_report(&path, &result)?;
            }
            Ok(())
        }
        Command::Bench { action: BenchAction::Emit { path } } => {
            build_benchmark()?;
            write_atomic(&path, |w| Ok(w.write_all(BENCHMARK_GRID.as_bytes())?))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `dualarm`: plan, insert, run, or sweep a bundled or custom scenario.
//!
//! Exit codes: 0 success, 1 plan failure, 2 insertion failure, 3 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dualarm_core::harness::{
    batch_sweep, emit_trace_csv, load_scenario, run_pipeline, ErrorSpec, Mode, RunOutput, Scenario, SCENARIO_DIR_ENV,
};
use dualarm_core::SpiralMode;

const EXIT_INPUT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dualarm", version, about = "Dual-arm regrasp planning and compliant peg-in-hole insertion in simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario file, or a bundled name looked up in the scenario directory.
    #[arg(long, global = true, default_value = "usb")]
    scenario: String,
    /// Directory searched for bare scenario names.
    #[arg(long, global = true, env = SCENARIO_DIR_ENV, default_value = "scenarios")]
    scenario_dir: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the controller's spiral mode.
    #[arg(long, global = true, value_enum)]
    spiral_mode: Option<SpiralArg>,
    /// Write the control trace as CSV.
    #[arg(long, global = true)]
    trace_out: Option<PathBuf>,
    /// Write the report as TOML instead of printing it.
    #[arg(long, global = true)]
    report_out: Option<PathBuf>,
    /// Write the regrasp graphs as TOML.
    #[arg(long, global = true)]
    dump_graph: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan both objects to their pre-assembly poses.
    Plan,
    /// Insert from the pre-assembly pose with injected error.
    Insert,
    /// Plan and/or insert, per `--mode`.
    Run {
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
    },
    /// Control-only Monte-Carlo trials in parallel.
    Sweep {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Per-axis in-plane position bound (mm); defaults to the scenario's.
        #[arg(long)]
        position_mm: Option<f64>,
        /// Smallest in-plane offset (mm).
        #[arg(long)]
        min_position_mm: Option<f64>,
        /// Per-axis rotation bound (deg); defaults to the scenario's.
        #[arg(long)]
        rotation_deg: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    PlanOnly,
    ControlOnly,
    Full,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PlanOnly => Mode::PlanOnly,
            ModeArg::ControlOnly => Mode::ControlOnly,
            ModeArg::Full => Mode::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpiralArg {
    Literal,
    Centered,
}

impl From<SpiralArg> for SpiralMode {
    fn from(m: SpiralArg) -> Self {
        match m {
            SpiralArg::Literal => SpiralMode::Literal,
            SpiralArg::Centered => SpiralMode::Centered,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

/// Runs the command; `Err` is always an input or I/O problem.
fn execute(cli: &Cli) -> Result<u8> {
    let common = &cli.common;
    let scenario = scenario(common)?;
    let mode = match &cli.command {
        Command::Plan => Mode::PlanOnly,
        Command::Insert => Mode::ControlOnly,
        Command::Run { mode } => (*mode).into(),
        Command::Sweep { trials, position_mm, min_position_mm, rotation_deg } => {
            let bounds = ErrorSpec {
                position_mm: position_mm.unwrap_or(scenario.errors.position_mm),
                min_position_mm: min_position_mm.unwrap_or(scenario.errors.min_position_mm),
                rotation_deg: rotation_deg.unwrap_or(scenario.errors.rotation_deg),
            };
            let report = batch_sweep(&scenario, *trials, bounds)?;
            emit(common.report_out.as_deref(), &report.to_toml())?;
            eprintln!("{}: {}/{} trials succeeded", scenario.name, report.successes, report.trials);
            return Ok(0);
        }
    };
    let out = run_pipeline(&scenario, mode)?;
    write_outputs(common, &out)?;
    eprintln!("{}: {}", scenario.name, out.report.outcome);
    Ok(u8::try_from(out.report.exit_code).context("exit code out of range")?)
}

fn scenario(common: &Common) -> Result<Scenario> {
    let path = resolve(&common.scenario, &common.scenario_dir);
    let mut s = load_scenario(&path).context("loading scenario")?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(mode) = common.spiral_mode {
        s.controller.spiral_mode = mode.into();
    }
    Ok(s)
}

/// An existing path wins; otherwise `name` is looked up as `<dir>/<name>.toml`.
fn resolve(name: &str, dir: &Path) -> PathBuf {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return direct;
    }
    let file = if name.ends_with(".toml") { name.to_string() } else { format!("{name}.toml") };
    dir.join(file)
}

fn write_outputs(common: &Common, out: &RunOutput) -> Result<()> {
    if let Some(path) = &common.trace_out {
        match &out.trace {
            Some(trace) => emit_trace_csv(trace, path)?,
            None => eprintln!("no control trace to write (plan-only or plan failed)"),
        }
    }
    if let Some(path) = &common.dump_graph {
        std::fs::write(path, out.graphs_toml()).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(common.report_out.as_deref(), &out.report.to_toml())
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

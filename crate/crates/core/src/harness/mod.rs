//! Scenario files, the plan → insert pipeline, and trace/report output.
//!
//! A scenario names two arms, static bodies, a mating object (pegs) and an
//! assembly object (holes). The mating object is planned first with both arms
//! available; the assembly object is then moved by the remaining free arm.
//! Insertion starts from the mating object's pre-assembly pose with an injected
//! pose error.

mod pipeline;
mod scenario;
mod sweep;

use thiserror::Error;

use crate::controller::ControlError;

pub use pipeline::{
    emit_trace_csv, run_pipeline, run_pipeline_with, ControlReport, InjectedError, Injection, Mode, ObjectPlanReport,
    Outcome, PhaseReport, PlanReport, RunOutput, RunReport,
};
pub use scenario::{
    load_scenario, parse_scenario, ArmDef, AssemblyDef, BodyDef, ErrorSpec, GraspDef, ObjectDef, PlanningDef, Role,
    Scenario,
};
pub use sweep::{batch_sweep, SweepReport, TrialReport};

/// Environment variable naming the default scenario directory.
pub const SCENARIO_DIR_ENV: &str = "DUALARM_SCENARIO_DIR";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("controller: {0}")]
    Control(ControlError),
    #[error("trace is empty")]
    EmptyTrace,
}

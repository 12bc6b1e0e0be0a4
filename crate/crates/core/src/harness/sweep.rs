use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{run_pipeline_with, InjectedError, Injection, Mode, Outcome};
use super::scenario::{ErrorSpec, Scenario};
use super::HarnessError;
use crate::controller::Phase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub index: usize,
    pub seed: u64,
    pub injected_error: InjectedError,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_phase: Option<Phase>,
    pub linear_steps: usize,
    pub spiral_steps: usize,
    pub impedance_steps: usize,
    pub final_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub seed: u64,
    pub trials: usize,
    pub bounds: ErrorSpec,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_linear_steps: f64,
    pub mean_spiral_steps: f64,
    pub mean_impedance_steps: f64,
    pub results: Vec<TrialReport>,
}

impl SweepReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep report is serializable")
    }
}

/// Control-only trials in parallel; trial `i` uses seed `scenario.seed + i`
/// for both the sampled error and the sensor noise.
pub fn batch_sweep(scenario: &Scenario, n_trials: usize, bounds: ErrorSpec) -> Result<SweepReport, HarnessError> {
    if n_trials == 0 {
        return Err(HarnessError::Invalid(vec!["sweep: n_trials must be >= 1".into()]));
    }
    scenario.validate()?;
    let bad = bounds.violations();
    if !bad.is_empty() {
        return Err(HarnessError::Invalid(bad.into_iter().map(|m| format!("sweep bounds: {m}")).collect()));
    }
    let results = (0..n_trials)
        .into_par_iter()
        .map(|index| {
            let seed = scenario.seed.wrapping_add(index as u64);
            let out = run_pipeline_with(scenario, Mode::ControlOnly, seed, Injection::Sample(bounds))?;
            let control = out.report.control.expect("control-only runs insert");
            let trace = out.trace.expect("control-only runs trace");
            Ok(TrialReport {
                index,
                seed,
                injected_error: control.injected_error,
                outcome: out.report.outcome,
                failed_phase: control.failed_phase,
                linear_steps: trace.steps_in(Phase::Linear),
                spiral_steps: trace.steps_in(Phase::Spiral),
                impedance_steps: trace.steps_in(Phase::Impedance),
                final_depth: control.final_depth,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let n = results.len() as f64;
    let mean = |f: fn(&TrialReport) -> usize| results.iter().map(|t| f(t) as f64).sum::<f64>() / n;
    let successes = results.iter().filter(|t| t.outcome == Outcome::Done).count();
    Ok(SweepReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        trials: n_trials,
        bounds,
        successes,
        success_rate: successes as f64 / n,
        mean_linear_steps: mean(|t| t.linear_steps),
        mean_spiral_steps: mean(|t| t.spiral_steps),
        mean_impedance_steps: mean(|t| t.impedance_steps),
        results,
    })
}

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{ErrorSpec, ObjectDef, Role, Scenario};
use super::HarnessError;
use crate::collision::{ArmModel, Scene};
use crate::contact::Plant;
use crate::controller::{run_insertion, ControllerTrace, InsertionOutcome, Phase};
use crate::kinematics::JointConfig;
use crate::math::{Pose, Rotation, Vec3};
use crate::planner::{plan_regrasp_motion, PlanError, RegraspPlan, RegraspProblem};
use crate::regrasp::{
    build_regrasp_graph, filter_feasible_grasps, generate_handover_nodes, generate_placement_nodes, Action, ArmSide,
    EdgeKind, Grasp, GraphDump, GraspContext, NodeGroup, RegraspGroups,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PlanOnly,
    ControlOnly,
    Full,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PlanOnly => "plan-only",
            Mode::ControlOnly => "control-only",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plan-only" | "plan" => Ok(Mode::PlanOnly),
            "control-only" | "control" => Ok(Mode::ControlOnly),
            "full" => Ok(Mode::Full),
            _ => Err(format!("unknown mode `{s}` (expected plan-only, control-only or full)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Plan-only run that found a plan.
    Planned,
    /// Insertion reached the target depth.
    Done,
    PlanFailed,
    InsertionFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Planned | Outcome::Done => 0,
            Outcome::PlanFailed => 1,
            Outcome::InsertionFailed => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Planned => "planned",
            Outcome::Done => "done",
            Outcome::PlanFailed => "plan-failed",
            Outcome::InsertionFailed => "insertion-failed",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pose error applied to the mating object: translation in the hole frame (m)
/// and roll/pitch/yaw about the peg tip (deg).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedError {
    pub position: [f64; 3],
    pub rotation_deg: [f64; 3],
}

impl InjectedError {
    /// Uniform sample: in-plane translation within ±`position_mm` and at least
    /// `min_position_mm` from the nominal, each angle within ±`rotation_deg`.
    pub fn sample(bounds: &ErrorSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ERROR_STREAM);
        let p = bounds.position_mm * 1e-3;
        let r = bounds.rotation_deg;
        let mut u = |b: f64| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
        let min = bounds.min_position_mm * 1e-3;
        let position = loop {
            let xy = [u(p), u(p)];
            if xy[0].hypot(xy[1]) >= min {
                break [xy[0], xy[1], 0.0];
            }
        };
        let rotation_deg = [u(r), u(r), u(r)];
        Self { position, rotation_deg }
    }

    /// Actual peg pose given the nominal one and the hole frame.
    pub fn apply(&self, peg: &Pose, hole: &Pose) -> Pose {
        let [r, p, y] = self.rotation_deg.map(f64::to_radians);
        let shift = hole.rotation.apply(&Vec3::from(self.position));
        Pose::from_translation(shift).compose(peg).compose(&Pose::from_rotation(Rotation::from_rpy(r, p, y)))
    }
}

const ERROR_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Injection {
    Sample(ErrorSpec),
    Fixed(InjectedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlanReport {
    pub object: String,
    pub role: Role,
    pub regrasp_path: Vec<String>,
    pub actions: Vec<Action>,
    /// Joint-space length of the motions realizing each regrasp edge (rad).
    pub edge_lengths: Vec<f64>,
    pub deleted_edges: Vec<[String; 2]>,
    pub handover_count: usize,
    pub perpendicular_handover: bool,
    pub searches: usize,
    pub rebuilds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub succeeded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub objects: Vec<ObjectPlanReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Phase,
    pub steps: usize,
    /// Simulated time, steps × dt (s).
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_phase: Option<Phase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub injected_error: InjectedError,
    /// Contiguous phase runs in trace order.
    pub phases: Vec<PhaseReport>,
    pub total_steps: usize,
    pub spiral_probes: usize,
    pub final_depth: f64,
    pub jammed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub outcome: Outcome,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlReport>,
}

impl RunReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report is serializable")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        write_file(path.as_ref(), self.to_toml().as_bytes())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Option<ControllerTrace>,
    /// Regrasp graphs as searched, keyed by object id.
    pub graphs: Vec<(String, GraphDump)>,
}

#[derive(Debug, Clone, Serialize)]
struct GraphFile<'a> {
    graphs: Vec<NamedGraph<'a>>,
}

#[derive(Debug, Clone, Serialize)]
struct NamedGraph<'a> {
    object: &'a str,
    #[serde(flatten)]
    graph: &'a GraphDump,
}

impl RunOutput {
    pub fn graphs_toml(&self) -> String {
        let graphs = self.graphs.iter().map(|(object, graph)| NamedGraph { object, graph }).collect();
        toml::to_string(&GraphFile { graphs }).expect("graph dump is serializable")
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Write the trace as CSV; the trace must be nonempty.
pub fn emit_trace_csv(trace: &ControllerTrace, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    if trace.len() == 0 {
        return Err(HarnessError::EmptyTrace);
    }
    write_file(path.as_ref(), trace.to_csv().as_bytes())
}

/// Run with the scenario's own seed and error bounds.
pub fn run_pipeline(scenario: &Scenario, mode: Mode) -> Result<RunOutput, HarnessError> {
    run_pipeline_with(scenario, mode, scenario.seed, Injection::Sample(scenario.errors))
}

/// Plan the objects to their pre-assembly poses and/or insert, all seeded by `seed`.
pub fn run_pipeline_with(scenario: &Scenario, mode: Mode, seed: u64, injection: Injection) -> Result<RunOutput, HarnessError> {
    scenario.validate()?;
    let mut graphs = Vec::new();
    let mut plan_report = None;
    let mut hand = None;
    if mode != Mode::ControlOnly {
        let planned = plan_both(scenario, seed, &mut graphs)?;
        match planned {
            Ok((report, mating_hand)) => {
                plan_report = Some(report);
                hand = Some(mating_hand);
            }
            Err(report) => {
                let report = RunReport {
                    scenario: scenario.name.clone(),
                    mode,
                    seed,
                    outcome: Outcome::PlanFailed,
                    exit_code: Outcome::PlanFailed.exit_code(),
                    plan: Some(report),
                    control: None,
                };
                return Ok(RunOutput { report, trace: None, graphs });
            }
        }
    }
    if mode == Mode::PlanOnly {
        let report = RunReport {
            scenario: scenario.name.clone(),
            mode,
            seed,
            outcome: Outcome::Planned,
            exit_code: Outcome::Planned.exit_code(),
            plan: plan_report,
            control: None,
        };
        return Ok(RunOutput { report, trace: None, graphs });
    }

    let (hand, hand_in_object) = match hand {
        Some(h) => h,
        None => nominal_hand(scenario)?,
    };
    let injected = match injection {
        Injection::Sample(bounds) => InjectedError::sample(&bounds, seed),
        Injection::Fixed(e) => e,
    };
    let (outcome, trace, jammed) = insert(scenario, &hand, &hand_in_object, &injected, seed)?;
    let result = if outcome.succeeded() { Outcome::Done } else { Outcome::InsertionFailed };
    let control = control_report(&outcome, &trace, injected, jammed);
    let report = RunReport {
        scenario: scenario.name.clone(),
        mode,
        seed,
        outcome: result,
        exit_code: result.exit_code(),
        plan: plan_report,
        control: Some(control),
    };
    Ok(RunOutput { report, trace: Some(trace), graphs })
}

fn control_report(outcome: &InsertionOutcome, trace: &ControllerTrace, injected: InjectedError, jammed: bool) -> ControlReport {
    let phases = trace
        .phase_runs()
        .into_iter()
        .map(|(phase, steps)| PhaseReport { phase, steps, duration: steps as f64 * trace.dt })
        .collect();
    ControlReport {
        phase: outcome.phase,
        failed_phase: outcome.failed_phase,
        error: outcome.error.as_ref().map(|e| e.to_string()),
        injected_error: injected,
        phases,
        total_steps: trace.len(),
        spiral_probes: outcome.spiral_probes,
        final_depth: outcome.final_depth,
        jammed,
    }
}

/// Commanded pre-assembly hand pose for the first goal-arm grasp, without planning.
fn nominal_hand(scenario: &Scenario) -> Result<(Pose, Pose), HarnessError> {
    let g = scenario.mating().grasps[0].hand_pose_in_object().map_err(|e| HarnessError::Invalid(vec![e]))?;
    Ok((scenario.mating_pre_assembly().compose(&g), g))
}

fn insert(
    scenario: &Scenario,
    hand: &Pose,
    hand_in_object: &Pose,
    injected: &InjectedError,
    seed: u64,
) -> Result<(InsertionOutcome, ControllerTrace, bool), HarnessError> {
    let model = scenario.peg_model()?;
    let hole = scenario.hole_frame();
    let nominal_peg = hand.compose(&hand_in_object.inverse()).compose(&scenario.assembly.peg_frame.to_pose());
    let actual_peg = injected.apply(&nominal_peg, &hole);
    let grasp = hand.inverse().compose(&actual_peg);
    let sensor = crate::contact::SensorModel { seed, ..scenario.sensor };
    let mut plant = Plant::new(model, grasp, *hand, sensor).map_err(|e| HarnessError::Invalid(vec![e.to_string()]))?;
    let (outcome, trace) = run_insertion(&scenario.controller, &mut plant, hand).map_err(HarnessError::Control)?;
    Ok((outcome, trace, plant.state().jammed()))
}

type PlanResult = Result<(PlanReport, (Pose, Pose)), PlanReport>;

/// Mating object first (both arms, handovers allowed), then the assembly
/// object with the remaining free arm.
fn plan_both(scenario: &Scenario, seed: u64, graphs: &mut Vec<(String, GraphDump)>) -> Result<PlanResult, HarnessError> {
    let arms = scenario.arm_models()?;
    let scene = scenario.scene()?;
    let homes: Vec<JointConfig> = arms.iter().map(|a| a.home.clone()).collect();
    let mut objects = Vec::new();
    let fail = |objects: Vec<ObjectPlanReport>, e: String| PlanReport { succeeded: false, error: Some(e), objects };

    let mating = scenario.mating();
    let both = [ArmSide::Left, ArmSide::Right];
    let mating_pre = scenario.mating_pre_assembly();
    let first = match plan_object(scenario, &arms, &scene, &homes, mating, &both, &mating_pre, true, seed, graphs) {
        Ok(p) => p,
        Err(e) => return Ok(Err(fail(objects, format!("{}: {e}", mating.id)))),
    };
    objects.push(object_report(mating, &first, scenario.planning.perpendicular_tol));

    let assembly = scenario.assembly_object();
    let free = [assembly.goal_arm];
    let goal = scenario.assembly_goal();
    let second_seed = seed.wrapping_add(0x1_0000);
    let second = match plan_object(
        scenario,
        &arms,
        &first.final_scene,
        &first.final_configs,
        assembly,
        &free,
        &goal,
        false,
        second_seed,
        graphs,
    ) {
        Ok(p) => p,
        Err(e) => return Ok(Err(fail(objects, format!("{}: {e}", assembly.id)))),
    };
    objects.push(object_report(assembly, &second, scenario.planning.perpendicular_tol));

    let holder = mating.goal_arm.index();
    let last = second.path.nodes.last().expect("nonempty path");
    debug_assert_eq!(last.grasp.arm, assembly.goal_arm);
    let mating_last = first.path.nodes.last().expect("nonempty path");
    let hand = arms[holder].hand_pose(&second.final_configs[holder]).map_err(|e| HarnessError::Invalid(vec![e.to_string()]))?;
    Ok(Ok((PlanReport { succeeded: true, error: None, objects }, (hand, mating_last.grasp.hand_pose_in_object))))
}

#[allow(clippy::too_many_arguments)]
fn plan_object(
    scenario: &Scenario,
    arms: &[ArmModel],
    scene: &Scene,
    start: &[JointConfig],
    object: &ObjectDef,
    sides: &[ArmSide],
    goal: &Pose,
    allow_handover: bool,
    seed: u64,
    graphs: &mut Vec<(String, GraphDump)>,
) -> Result<RegraspPlan, String> {
    let planning = &scenario.planning;
    let mut ctx = GraspContext::new(scene, arms, &object.id);
    ctx.ik = planning.ik;
    ctx.rest = start.to_vec();
    let build = |side: ArmSide| -> Result<Vec<Grasp>, String> { object.grasps.iter().map(|g| g.build(side)).collect() };
    let mut all = Vec::new();
    for &s in sides {
        all.extend(build(s)?);
    }
    let goal_grasps = build(object.goal_arm)?;
    let initial = object.initial_pose.to_pose();
    let err = |e: crate::regrasp::RegraspError| e.to_string();

    let initial_nodes = filter_feasible_grasps(&ctx, &initial, &all, NodeGroup::Initial, 0).map_err(err)?;
    let handover = if allow_handover && sides.len() == 2 && !planning.handover_poses.is_empty() {
        let poses: Vec<Pose> = planning.handover_poses.iter().map(|p| p.to_pose()).collect();
        generate_handover_nodes(&ctx, &build(ArmSide::Left)?, &build(ArmSide::Right)?, &poses).map_err(err)?
    } else {
        Default::default()
    };
    let placements: Vec<Pose> = object.placements.iter().map(|p| p.to_pose()).collect();
    let placement_nodes = generate_placement_nodes(&ctx, &placements, &all).map_err(err)?;
    let goal_nodes = filter_feasible_grasps(&ctx, goal, &goal_grasps, NodeGroup::Goal, 0).map_err(err)?;
    let groups = RegraspGroups {
        initial: initial_nodes,
        handover: handover.nodes,
        placement: placement_nodes,
        goal: goal_nodes,
        handover_pairs: handover.pairs,
    };
    let mut graph = build_regrasp_graph(groups).map_err(err)?;
    let problem = RegraspProblem {
        scene,
        arms,
        object: &object.id,
        start: start.to_vec(),
        require_perpendicular: allow_handover && planning.require_perpendicular,
        perpendicular_tol: planning.perpendicular_tol,
        alternate_placements: planning.alternate_placements.iter().map(|p| p.to_pose()).collect(),
        budget: planning.budget,
    };
    let params = crate::planner::PlannerParams { seed, ..planning.params };
    let result = plan_regrasp_motion(&mut graph, &problem, &params);
    graphs.push((object.id.clone(), graph.dump()));
    result.map_err(|e: PlanError| e.to_string())
}

fn object_report(object: &ObjectDef, plan: &RegraspPlan, tol: f64) -> ObjectPlanReport {
    let edges = plan.path.nodes.len().saturating_sub(1);
    let mut edge_lengths = vec![0.0; edges];
    for seg in &plan.segments {
        if let Some(l) = edge_lengths.get_mut(seg.edge) {
            *l += seg.path.length();
        }
    }
    ObjectPlanReport {
        object: object.id.clone(),
        role: object.role,
        regrasp_path: plan.path.node_ids().into_iter().map(String::from).collect(),
        actions: plan.path.actions.clone(),
        edge_lengths,
        deleted_edges: plan.deleted_edges.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
        handover_count: plan.path.edge_kinds.iter().filter(|k| **k == EdgeKind::Handover).count(),
        perpendicular_handover: plan.path.has_perpendicular_handover(tol),
        searches: plan.searches,
        rebuilds: plan.rebuilds,
    }
}

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::collision::{ArmModel, Body, BodyKind, Scene, ShapeSpec};
use crate::contact::{PegHoleModel, PegHoleSpec, SensorModel};
use crate::controller::ControllerConfig;
use crate::kinematics::{ur3_like, ChainSpec, IkParams, JointConfig};
use crate::math::{Pose, PoseSpec, Rotation, Vec3};
use crate::planner::{BacktrackBudget, PlannerParams};
use crate::regrasp::{ArmSide, Grasp, PERPENDICULAR_TOL};

/// Which side of the joint an object is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Carries the pegs; moved by the compliant controller.
    Mating,
    /// Carries the holes; held fixed during insertion.
    Assembly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmDef {
    pub name: String,
    pub base: PoseSpec,
    pub home: Vec<f64>,
    /// Custom chain; a UR3-like arm at `base` when absent.
    #[serde(default)]
    pub chain: Option<ChainSpec>,
    #[serde(default = "default_link_radius")]
    pub link_radius: f64,
}

fn default_link_radius() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDef {
    pub id: String,
    pub shape: ShapeSpec,
    #[serde(default)]
    pub pose: PoseSpec,
}

/// Grasp candidate in the object frame: the hand approaches along `approach`
/// with its fingers closing along `fingers`, grasp center at `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspDef {
    pub id: String,
    pub approach: [f64; 3],
    pub fingers: [f64; 3],
    #[serde(default)]
    pub center: [f64; 3],
    pub jaw_width: f64,
}

impl GraspDef {
    pub fn hand_pose_in_object(&self) -> Result<Pose, String> {
        let z = Vec3::from(self.approach);
        let y = Vec3::from(self.fingers);
        if z.norm() < 1e-9 || y.norm() < 1e-9 {
            return Err(format!("grasp `{}`: approach and fingers must be nonzero", self.id));
        }
        let (z, y) = (z.normalize(), y.normalize());
        if z.dot(&y).abs() > 1e-6 {
            return Err(format!("grasp `{}`: approach and fingers must be orthogonal", self.id));
        }
        let m = nalgebra::Matrix3::from_columns(&[y.cross(&z), y, z]);
        let r = Rotation::from_matrix(m).map_err(|e| format!("grasp `{}`: {e}", self.id))?;
        Ok(Pose::new(r, Vec3::from(self.center)))
    }

    pub fn build(&self, arm: ArmSide) -> Result<Grasp, String> {
        Grasp::new(self.id.clone(), arm, self.hand_pose_in_object()?, self.jaw_width).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDef {
    pub id: String,
    pub role: Role,
    pub shape: ShapeSpec,
    pub initial_pose: PoseSpec,
    pub grasps: Vec<GraspDef>,
    /// Stable resting poses available for pick-and-place regrasps.
    #[serde(default)]
    pub placements: Vec<PoseSpec>,
    /// Arm that must hold the object at its goal.
    pub goal_arm: ArmSide,
}

/// Where the objects meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyDef {
    /// Assembly-object pose at the goal, world frame.
    #[serde(default)]
    pub goal_pose: Option<PoseSpec>,
    /// Peg tip frame in the mating-object frame.
    pub peg_frame: PoseSpec,
    /// Height of the peg tip above the hole surface at the pre-assembly pose (m).
    pub pre_assembly_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanningDef {
    pub params: PlannerParams,
    pub ik: IkParams,
    pub budget: BacktrackBudget,
    /// Require a perpendicular handover for the mating object.
    pub require_perpendicular: bool,
    pub perpendicular_tol: f64,
    pub handover_poses: Vec<PoseSpec>,
    /// Poses tried when placement stations must be rebuilt.
    pub alternate_placements: Vec<PoseSpec>,
}

impl Default for PlanningDef {
    fn default() -> Self {
        Self {
            params: PlannerParams::default(),
            ik: IkParams::default(),
            budget: BacktrackBudget::default(),
            require_perpendicular: false,
            perpendicular_tol: PERPENDICULAR_TOL,
            handover_poses: Vec::new(),
            alternate_placements: Vec::new(),
        }
    }
}

/// Uniform error bounds applied to the mating object's pre-assembly pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorSpec {
    /// Per-axis translation bound in the hole plane (mm).
    pub position_mm: f64,
    /// Smallest in-plane offset magnitude (mm); zero samples the full square.
    pub min_position_mm: f64,
    /// Per-axis roll/pitch/yaw bound (deg).
    pub rotation_deg: f64,
}

impl ErrorSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, b) in [
            ("position_mm", self.position_mm),
            ("min_position_mm", self.min_position_mm),
            ("rotation_deg", self.rotation_deg),
        ] {
            if !(b.is_finite() && b >= 0.0) {
                out.push(format!("{name}: must be finite and >= 0, got {b}"));
            }
        }
        // The annulus must intersect the sampling square.
        if self.min_position_mm > self.position_mm {
            out.push("min_position_mm: must not exceed position_mm".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub arms: Vec<ArmDef>,
    #[serde(default)]
    pub bodies: Vec<BodyDef>,
    pub objects: Vec<ObjectDef>,
    pub assembly: AssemblyDef,
    /// Hole frame is given in the assembly-object frame.
    pub peg: PegHoleSpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub planning: PlanningDef,
    #[serde(default)]
    pub errors: ErrorSpec,
}

/// Parse and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(v))
        }
    }

    /// Every violated invariant, one message per problem.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push("name: must not be empty".into());
        }
        if self.arms.len() != 2 {
            out.push(format!("arms: expected 2 (left, right), found {}", self.arms.len()));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            match arm.build() {
                Ok(model) => {
                    if !model.chain.within_limits(&model.home) {
                        out.push(format!("arms[{i}].home: outside joint limits"));
                    }
                }
                Err(e) => out.push(format!("arms[{i}]: {e}")),
            }
        }

        let mut ids = BTreeSet::new();
        for b in &self.bodies {
            if !ids.insert(b.id.as_str()) {
                out.push(format!("bodies: duplicate id `{}`", b.id));
            }
            if let Err(e) = b.shape.build().validate() {
                out.push(format!("bodies.{}.shape: {e}", b.id));
            }
        }
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                out.push(format!("objects: duplicate id `{}`", o.id));
            }
            if let Err(e) = o.shape.build().validate() {
                out.push(format!("objects.{}.shape: {e}", o.id));
            }
            if o.grasps.is_empty() {
                out.push(format!("objects.{}.grasps: at least one candidate required", o.id));
            }
            let mut gids = BTreeSet::new();
            for g in &o.grasps {
                if !gids.insert(g.id.as_str()) {
                    out.push(format!("objects.{}.grasps: duplicate id `{}`", o.id, g.id));
                }
                if let Err(e) = g.build(o.goal_arm) {
                    out.push(format!("objects.{}.grasps: {e}", o.id));
                }
            }
        }
        for role in [Role::Mating, Role::Assembly] {
            let n = self.objects.iter().filter(|o| o.role == role).count();
            if n != 1 {
                out.push(format!("objects: expected exactly one {role:?} object, found {n}").to_lowercase());
            }
        }
        if let (Some(m), Some(a)) = (self.object(Role::Mating), self.object(Role::Assembly)) {
            if m.goal_arm == a.goal_arm {
                out.push("objects: mating and assembly objects need different goal arms".into());
            }
        }

        if self.assembly.goal_pose.is_none() {
            out.push("assembly.goal_pose: missing".into());
        }
        let off = self.assembly.pre_assembly_offset;
        if !(off.is_finite() && off > 0.0) {
            out.push(format!("assembly.pre_assembly_offset: must be positive, got {off}"));
        } else if off <= self.errors.position_mm * 1e-3 {
            out.push("assembly.pre_assembly_offset: must exceed the positional error bound".into());
        }
        out.extend(self.peg.violations().into_iter().map(|m| format!("peg: {m}")));
        out.extend(self.controller.violations().into_iter().map(|m| format!("controller: {m}")));
        if let Err(e) = self.sensor.validate() {
            out.push(format!("sensor: {e}"));
        }
        if let Err(e) = self.planning.params.validate() {
            out.push(format!("planning.params: {e}"));
        }
        if let Some(goal) = self.assembly.goal_pose {
            let hz = goal.to_pose().compose(&self.peg.hole_frame.to_pose()).rotation.z_axis();
            let v = self.controller.v();
            if v.norm() > 0.0 && v.normalize().dot(&hz) > -1.0 + 1e-6 {
                out.push("controller.v_direction: must point into the hole (opposite the hole axis)".into());
            }
        }
        out.extend(self.errors.violations().into_iter().map(|m| format!("errors.{m}")));
        out
    }

    pub fn object(&self, role: Role) -> Option<&ObjectDef> {
        self.objects.iter().find(|o| o.role == role)
    }

    pub fn mating(&self) -> &ObjectDef {
        self.object(Role::Mating).expect("validated scenario has a mating object")
    }

    pub fn assembly_object(&self) -> &ObjectDef {
        self.object(Role::Assembly).expect("validated scenario has an assembly object")
    }

    pub fn arm_models(&self) -> Result<Vec<ArmModel>, HarnessError> {
        self.arms.iter().map(|a| a.build().map_err(|e| HarnessError::Invalid(vec![e]))).collect()
    }

    /// Static bodies plus both objects at their initial poses.
    pub fn scene(&self) -> Result<Scene, HarnessError> {
        let statics = self.bodies.iter().map(|b| Body::new(&b.id, b.shape.build(), b.pose.to_pose(), BodyKind::StaticEnvironment));
        let objects = self.objects.iter().map(|o| Body::new(&o.id, o.shape.build(), o.initial_pose.to_pose(), BodyKind::Object));
        Scene::new(statics.chain(objects).collect()).map_err(|e| HarnessError::Invalid(vec![e.to_string()]))
    }

    pub fn assembly_goal(&self) -> Pose {
        self.assembly.goal_pose.expect("validated scenario has a goal pose").to_pose()
    }

    /// Hole frame in the world with the assembly object at its goal.
    pub fn hole_frame(&self) -> Pose {
        self.assembly_goal().compose(&self.peg.hole_frame.to_pose())
    }

    /// Mating-object pose with the peg tip on the hole surface, aligned.
    pub fn mating_goal(&self) -> Pose {
        self.hole_frame().compose(&self.assembly.peg_frame.to_pose().inverse())
    }

    /// Mating-object pose one step before assembly: raised along the hole axis.
    pub fn mating_pre_assembly(&self) -> Pose {
        let up = self.hole_frame().rotation.z_axis() * self.assembly.pre_assembly_offset;
        Pose::from_translation(up).compose(&self.mating_goal())
    }

    /// Contact model with the hole frame placed in the world.
    pub fn peg_model(&self) -> Result<PegHoleModel, HarnessError> {
        let mut spec = self.peg.clone();
        spec.hole_frame = PoseSpec::from_pose(&self.hole_frame());
        spec.build().map_err(|e| HarnessError::Invalid(vec![e.to_string()]))
    }
}

impl ArmDef {
    pub fn build(&self) -> Result<ArmModel, String> {
        let chain = match &self.chain {
            Some(spec) => {
                let mut spec = spec.clone();
                spec.base = self.base;
                spec.build().map_err(|e| e.to_string())?
            }
            None => ur3_like(self.base.to_pose()),
        };
        if self.home.len() != chain.dof() {
            return Err(format!("`{}`: home has {} joints, chain has {}", self.name, self.home.len(), chain.dof()));
        }
        let mut arm = ArmModel::new(&self.name, chain, JointConfig(self.home.clone()));
        arm.link_radius = self.link_radius;
        Ok(arm)
    }
}

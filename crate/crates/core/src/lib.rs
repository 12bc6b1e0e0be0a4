//! Dual-arm assembly in simulation: regrasp and motion planning bring two
//! parts to their pre-assembly poses, then a linear/spiral/impedance
//! controller inserts the peg against a quasi-static contact model.

pub mod collision;
pub mod contact;
pub mod controller;
pub mod harness;
pub mod kinematics;
pub mod math;
pub mod planner;
pub mod regrasp;

pub use collision::{ArmModel, Scene, ShapeSpec};
pub use contact::{Contour, PegHoleModel, PegHoleSpec, Pin, SensorModel, WrenchSample};
pub use controller::{ControllerConfig, ControllerTrace, Phase, SpiralMode};
pub use harness::{ErrorSpec, Mode, Outcome, RunReport, Scenario};
pub use kinematics::{ChainSpec, JointConfig, KinematicChain};
pub use math::{Pose, PoseSpec, Rotation, Vec3};
pub use planner::PlannerParams;
pub use regrasp::{ArmSide, Grasp, RegraspGraph, RegraspPath};

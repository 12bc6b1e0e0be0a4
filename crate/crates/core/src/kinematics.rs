//! Serial-chain kinematics for the simulated arms.
//!
//! A chain is a base pose followed by revolute joints. Each joint first applies
//! a fixed link offset, then rotates about its axis (expressed in the frame
//! reached after the offset). A fixed tool transform closes the chain.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector, Matrix6xX};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, PoseSpec, Rotation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint config has {got} values, chain has {expected} joints")]
    LengthMismatch { expected: usize, got: usize },
    #[error("target unreachable (position error {position_error:.2e} m, orientation error {orientation_error:.2e} rad)")]
    Unreachable { position_error: f64, orientation_error: f64 },
    #[error("joint {joint} value {value} outside limits [{lower}, {upper}]")]
    JointLimit { joint: usize, value: f64, lower: f64, upper: f64 },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
}

/// Joint angles in radians.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `self + s·(other − self)`.
    pub fn lerp(&self, other: &JointConfig, s: f64) -> JointConfig {
        JointConfig(self.0.iter().zip(&other.0).map(|(a, b)| a + s * (b - a)).collect())
    }
}

impl Deref for JointConfig {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointConfig {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
    /// Fixed transform from the previous frame to this joint's frame.
    pub offset: Pose,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub base: Pose,
    pub joints: Vec<Joint>,
    pub tool: Pose,
}

/// Serialized joint description used by scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub axis: [f64; 3],
    #[serde(default)]
    pub offset: PoseSpec,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default)]
    pub base: PoseSpec,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub tool: PoseSpec,
}

impl ChainSpec {
    pub fn build(&self) -> Result<KinematicChain, KinematicsError> {
        let joints = self
            .joints
            .iter()
            .map(|j| Joint {
                axis: Vec3::new(j.axis[0], j.axis[1], j.axis[2]),
                offset: j.offset.to_pose(),
                lower: j.limits[0],
                upper: j.limits[1],
            })
            .collect();
        KinematicChain::new(self.base.to_pose(), joints, self.tool.to_pose())
    }
}

/// Per-joint frames for one configuration.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// Frame of each joint after its rotation has been applied.
    pub links: Vec<Pose>,
    /// Joint rotation axes in the world frame.
    pub axes: Vec<Vec3>,
    /// Joint origins in the world frame.
    pub origins: Vec<Vec3>,
    pub tip: Pose,
}

impl KinematicChain {
    pub fn new(base: Pose, mut joints: Vec<Joint>, tool: Pose) -> Result<Self, KinematicsError> {
        if joints.is_empty() {
            return Err(KinematicsError::InvalidChain("chain needs at least one joint".into()));
        }
        for (i, j) in joints.iter_mut().enumerate() {
            let n = j.axis.norm();
            if !(n > 0.0) {
                return Err(KinematicsError::InvalidChain(format!("joint {i} axis is zero")));
            }
            j.axis /= n;
            if !(j.lower <= j.upper) {
                return Err(KinematicsError::InvalidChain(format!(
                    "joint {i} limits [{}, {}] are inverted",
                    j.lower, j.upper
                )));
            }
        }
        Ok(Self { base, joints, tool })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    fn check_len(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::LengthMismatch { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<(), KinematicsError> {
        self.check_len(q)?;
        for (i, (j, &v)) in self.joints.iter().zip(q).enumerate() {
            if v < j.lower || v > j.upper || !v.is_finite() {
                return Err(KinematicsError::JointLimit { joint: i, value: v, lower: j.lower, upper: j.upper });
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        self.check_limits(q).is_ok()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    /// Upper bound on the distance from the base origin to any reachable tip position.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.offset.translation.norm()).sum::<f64>()
            + self.tool.translation.norm()
    }

    pub fn frames(&self, q: &[f64]) -> Result<ChainFrames, KinematicsError> {
        self.check_len(q)?;
        let mut t = self.base;
        let mut links = Vec::with_capacity(q.len());
        let mut axes = Vec::with_capacity(q.len());
        let mut origins = Vec::with_capacity(q.len());
        for (j, &angle) in self.joints.iter().zip(q) {
            let at_joint = t.compose(&j.offset);
            axes.push(at_joint.rotation.apply(&j.axis));
            origins.push(at_joint.translation);
            let r = Rotation::rodrigues(angle, &j.axis).expect("axis normalized at construction");
            t = at_joint.compose(&Pose::from_rotation(r));
            links.push(t);
        }
        let tip = t.compose(&self.tool);
        Ok(ChainFrames { links, axes, origins, tip })
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Pose, KinematicsError> {
        Ok(self.frames(q)?.tip)
    }

    /// Geometric Jacobian (rows 0..3 linear velocity of the tip, rows 3..6 angular velocity).
    pub fn jacobian(&self, q: &[f64]) -> Result<Matrix6xX<f64>, KinematicsError> {
        let f = self.frames(q)?;
        let mut jac = Matrix6xX::zeros(q.len());
        let p = f.tip.translation;
        for i in 0..q.len() {
            let w = f.axes[i];
            let v = w.cross(&(p - f.origins[i]));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&v);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&w);
        }
        Ok(jac)
    }

    pub fn inverse_kinematics(
        &self,
        target: &Pose,
        seed: &[f64],
        params: &IkParams,
    ) -> Result<JointConfig, KinematicsError> {
        self.check_limits(seed)?;
        let gap = (target.translation - self.base.translation).norm();
        if gap > self.reach() {
            return Err(KinematicsError::Unreachable { position_error: gap - self.reach(), orientation_error: 0.0 });
        }
        let n = self.dof();
        let mut q = seed.to_vec();
        let lambda2 = params.damping * params.damping;
        let mut last = (f64::INFINITY, f64::INFINITY);
        for _ in 0..=params.max_iterations {
            let tip = self.forward_kinematics(&q)?;
            let dp = target.translation - tip.translation;
            let dr = (target.rotation * tip.rotation.transpose()).log();
            last = (dp.norm(), dr.norm());
            if last.0 <= params.position_tolerance && last.1 <= params.orientation_tolerance {
                return Ok(JointConfig(q));
            }
            let jac = self.jacobian(&q)?;
            let err = DVector::from_column_slice(&[dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]);
            let jjt = &jac * jac.transpose() + DMatrix::<f64>::identity(6, 6) * lambda2;
            let Some(y) = jjt.lu().solve(&err) else { break };
            let mut dq = jac.transpose() * y;
            let step = dq.amax();
            if step > params.max_step {
                dq *= params.max_step / step;
            }
            for i in 0..n {
                q[i] += dq[i];
            }
            self.clamp(&mut q);
        }
        Err(KinematicsError::Unreachable { position_error: last.0, orientation_error: last.1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkParams {
    pub damping: f64,
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// Largest per-iteration change of any joint (rad).
    pub max_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 1e-2,
            max_iterations: 200,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            max_step: 0.4,
        }
    }
}

/// Six-joint arm with UR3-like proportions mounted at `base`.
///
/// The tool frame sits at the grasp center between the fingers with its z axis
/// along the approach direction.
pub fn ur3_like(base: Pose) -> KinematicChain {
    let lim = 2.0 * std::f64::consts::PI;
    let j = |axis: Vec3, xyz: [f64; 3]| Joint {
        axis,
        offset: Pose::from_translation(Vec3::new(xyz[0], xyz[1], xyz[2])),
        lower: -lim,
        upper: lim,
    };
    KinematicChain::new(
        base,
        vec![
            j(Vec3::z(), [0.0, 0.0, 0.152]),
            j(Vec3::y(), [0.0, 0.12, 0.0]),
            j(Vec3::y(), [0.0, -0.093, 0.244]),
            j(Vec3::y(), [0.0, 0.0, 0.213]),
            j(Vec3::z(), [0.0, 0.083, 0.0]),
            j(Vec3::y(), [0.0, 0.0, 0.083]),
        ],
        // flange → grasp center, approach axis turned onto the flange normal (+y)
        Pose::new(Rotation::about_x(-std::f64::consts::FRAC_PI_2), Vec3::new(0.0, 0.17, 0.0)),
    )
    .expect("static chain is valid")
}

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{pieces_collide, Body, BodyKind, ConvexPiece, ShapePrimitive};
use crate::kinematics::{JointConfig, KinematicChain, KinematicsError};
use crate::math::{Pose, Rotation, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("duplicate body id `{0}`")]
    DuplicateId(String),
    #[error("unknown body `{0}`")]
    UnknownBody(String),
    #[error("body `{0}` is not an object")]
    NotAnObject(String),
    #[error("object `{object}` is already held by arm {arm}")]
    AlreadyAttached { object: String, arm: usize },
    #[error("unknown arm index {0}")]
    UnknownArm(usize),
    #[error("expected {expected} joint configs, got {got}")]
    ArmCountMismatch { expected: usize, got: usize },
    #[error("invalid shape for `{id}`: {reason}")]
    InvalidShape { id: String, reason: String },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// An object rigidly held by a hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub arm: usize,
    /// Object pose expressed in the hand (tool) frame.
    pub hand_to_object: Pose,
}

/// Names a piece of robot geometry: index 0 is the pedestal, `1..=dof` are the
/// links after each joint, `dof + 1` is the hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkRef {
    pub arm: usize,
    pub link: usize,
}

/// Arm geometry: the chain plus capsule-like link cylinders and a hand shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub name: String,
    pub chain: KinematicChain,
    pub link_radius: f64,
    /// Hand geometry in the tool frame (z = approach axis, y = finger axis).
    pub hand: ShapePrimitive,
    pub home: JointConfig,
}

impl ArmModel {
    pub fn new(name: impl Into<String>, chain: KinematicChain, home: JointConfig) -> Self {
        Self { name: name.into(), chain, link_radius: 0.03, hand: parallel_gripper(0.085), home }
    }

    pub fn hand_link(&self) -> usize {
        self.chain.dof() + 1
    }

    pub fn hand_pose(&self, q: &[f64]) -> Result<Pose, KinematicsError> {
        self.chain.forward_kinematics(q)
    }

    /// Convex pieces per link, indexed as in [`LinkRef`].
    pub fn link_pieces(&self, q: &[f64]) -> Result<(Vec<Vec<ConvexPiece>>, Pose), KinematicsError> {
        let frames = self.chain.frames(q)?;
        let mut points = Vec::with_capacity(frames.origins.len() + 1);
        points.push(self.chain.base.translation);
        points.extend(frames.origins.iter().copied());
        // the last link frame is the flange
        let flange = frames.links.last().map(|p| p.translation).unwrap_or(self.chain.base.translation);
        points.push(flange);
        let mut out: Vec<Vec<ConvexPiece>> = points
            .windows(2)
            .map(|w| segment_cylinder(w[0], w[1], self.link_radius).into_iter().collect())
            .collect();
        out.push(self.hand.convex_pieces(&frames.tip));
        Ok((out, frames.tip))
    }
}

fn segment_cylinder(a: Vec3, b: Vec3, radius: f64) -> Option<ConvexPiece> {
    let d = b - a;
    let len = d.norm();
    let half = 0.5 * len - radius;
    if half < 1e-3 {
        return None;
    }
    let dir = d / len;
    let axis = Vec3::z().cross(&dir);
    let rot = if axis.norm() < 1e-12 {
        if dir.z > 0.0 { Rotation::identity() } else { Rotation::about_x(std::f64::consts::PI) }
    } else {
        Rotation::rodrigues(dir.z.clamp(-1.0, 1.0).acos(), &axis).expect("nonzero axis")
    };
    Some(ConvexPiece::new(
        super::Convex::Cylinder { radius, half_height: half },
        Pose::new(rot, (a + b) * 0.5),
    ))
}

/// Two-finger gripper in its tool frame, fingers open to `stroke`.
pub fn parallel_gripper(stroke: f64) -> ShapePrimitive {
    let finger_half = Vec3::new(0.01, 0.006, 0.0325);
    let finger_y = 0.5 * stroke + finger_half.y;
    ShapePrimitive::compound(vec![
        // Palm stops 10 mm short of the flange so it never grazes the wrist links.
        ShapePrimitive::cuboid(Vec3::new(0.03, 0.05, 0.05))
            .at(Pose::from_translation(Vec3::new(0.0, 0.0, -0.11))),
        ShapePrimitive::cuboid(finger_half).at(Pose::from_translation(Vec3::new(0.0, finger_y, -0.0275))),
        ShapePrimitive::cuboid(finger_half).at(Pose::from_translation(Vec3::new(0.0, -finger_y, -0.0275))),
    ])
}

/// Bodies plus which objects are held and which hands may touch which objects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    bodies: Vec<Body>,
    attachments: BTreeMap<String, Attachment>,
    hand_contacts: BTreeSet<(usize, String)>,
}

impl Scene {
    pub fn new(bodies: Vec<Body>) -> Result<Self, SceneError> {
        let mut seen = BTreeSet::new();
        for b in &bodies {
            if !seen.insert(b.id.clone()) {
                return Err(SceneError::DuplicateId(b.id.clone()));
            }
            b.shape
                .validate()
                .map_err(|reason| SceneError::InvalidShape { id: b.id.clone(), reason })?;
        }
        Ok(Self { bodies, ..Default::default() })
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn body(&self, id: &str) -> Option<&Body> {
        self.bodies.iter().find(|b| b.id == id)
    }

    pub fn add_body(&mut self, body: Body) -> Result<(), SceneError> {
        if self.body(&body.id).is_some() {
            return Err(SceneError::DuplicateId(body.id));
        }
        body.shape
            .validate()
            .map_err(|reason| SceneError::InvalidShape { id: body.id.clone(), reason })?;
        self.bodies.push(body);
        Ok(())
    }

    pub fn set_pose(&mut self, id: &str, pose: Pose) -> Result<(), SceneError> {
        let body = self
            .bodies
            .iter_mut()
            .find(|b| b.id == id)
            .ok_or_else(|| SceneError::UnknownBody(id.to_string()))?;
        body.pose = pose;
        Ok(())
    }

    pub fn attachment(&self, object: &str) -> Option<&Attachment> {
        self.attachments.get(object)
    }

    pub fn attach(&mut self, object: &str, arm: usize, hand_to_object: Pose) -> Result<(), SceneError> {
        let body = self.body(object).ok_or_else(|| SceneError::UnknownBody(object.to_string()))?;
        if body.kind != BodyKind::Object {
            return Err(SceneError::NotAnObject(object.to_string()));
        }
        if let Some(existing) = self.attachments.get(object) {
            if existing.arm != arm {
                return Err(SceneError::AlreadyAttached { object: object.to_string(), arm: existing.arm });
            }
        }
        self.attachments.insert(object.to_string(), Attachment { arm, hand_to_object });
        self.hand_contacts.insert((arm, object.to_string()));
        Ok(())
    }

    /// Releases the object, leaving it at `world_pose`.
    pub fn detach(&mut self, object: &str, world_pose: Pose) -> Result<(), SceneError> {
        if let Some(att) = self.attachments.remove(object) {
            self.hand_contacts.remove(&(att.arm, object.to_string()));
        }
        self.set_pose(object, world_pose)
    }

    /// Lets `arm`'s hand touch `object` without holding it (approach and release).
    pub fn allow_hand_contact(&mut self, arm: usize, object: &str) {
        self.hand_contacts.insert((arm, object.to_string()));
    }

    pub fn forbid_hand_contact(&mut self, arm: usize, object: &str) {
        if self.attachments.get(object).is_some_and(|a| a.arm == arm) {
            return;
        }
        self.hand_contacts.remove(&(arm, object.to_string()));
    }

    fn check_arms(&self, arms: &[ArmModel], q_all: &[JointConfig]) -> Result<(), SceneError> {
        if arms.len() != q_all.len() {
            return Err(SceneError::ArmCountMismatch { expected: arms.len(), got: q_all.len() });
        }
        for att in self.attachments.values() {
            if att.arm >= arms.len() {
                return Err(SceneError::UnknownArm(att.arm));
            }
        }
        Ok(())
    }

    /// World-frame object poses with attachments resolved against the given configs.
    pub fn object_poses(&self, arms: &[ArmModel], q_all: &[JointConfig]) -> Result<BTreeMap<String, Pose>, SceneError> {
        self.check_arms(arms, q_all)?;
        let mut out = BTreeMap::new();
        for b in self.bodies.iter().filter(|b| b.kind == BodyKind::Object) {
            let pose = match self.attachments.get(&b.id) {
                Some(att) => arms[att.arm].hand_pose(&q_all[att.arm])?.compose(&att.hand_to_object),
                None => b.pose,
            };
            out.insert(b.id.clone(), pose);
        }
        Ok(out)
    }

    /// True iff no checked pair collides at the given arm configurations.
    ///
    /// Skipped pairs: links of one arm at most two indices apart, the pedestal
    /// against static bodies, hands against objects they hold or may touch, and
    /// free-standing objects against static bodies (they rest on them).
    pub fn config_collision_free(&self, arms: &[ArmModel], q_all: &[JointConfig]) -> Result<bool, SceneError> {
        self.check_arms(arms, q_all)?;
        let mut links = Vec::with_capacity(arms.len());
        let mut hands = Vec::with_capacity(arms.len());
        for (arm, q) in arms.iter().zip(q_all) {
            let (pieces, hand) = arm.link_pieces(q)?;
            links.push(pieces);
            hands.push(hand);
        }
        let statics: Vec<Vec<ConvexPiece>> = self
            .bodies
            .iter()
            .filter(|b| b.kind == BodyKind::StaticEnvironment)
            .map(Body::pieces)
            .collect();
        let objects: Vec<(&str, bool, Vec<ConvexPiece>)> = self
            .bodies
            .iter()
            .filter(|b| b.kind == BodyKind::Object)
            .map(|b| match self.attachments.get(&b.id) {
                Some(att) => {
                    let pose = hands[att.arm].compose(&att.hand_to_object);
                    (b.id.as_str(), true, b.shape.convex_pieces(&pose))
                }
                None => (b.id.as_str(), false, b.pieces()),
            })
            .collect();

        for (a, arm_links) in links.iter().enumerate() {
            let hand_idx = arms[a].hand_link();
            for (i, piece) in arm_links.iter().enumerate() {
                if piece.is_empty() {
                    continue;
                }
                if i > 0 && statics.iter().any(|s| pieces_collide(piece, s)) {
                    return Ok(false);
                }
                for (id, _, obj) in &objects {
                    if i == hand_idx && self.hand_contacts.contains(&(a, id.to_string())) {
                        continue;
                    }
                    if pieces_collide(piece, obj) {
                        return Ok(false);
                    }
                }
                for j in (i + 3)..arm_links.len() {
                    if pieces_collide(piece, &arm_links[j]) {
                        return Ok(false);
                    }
                }
                for other in links.iter().skip(a + 1) {
                    if other.iter().any(|o| pieces_collide(piece, o)) {
                        return Ok(false);
                    }
                }
            }
        }
        for (k, (_, attached, obj)) in objects.iter().enumerate() {
            if !attached {
                continue;
            }
            if statics.iter().any(|s| pieces_collide(obj, s)) {
                return Ok(false);
            }
            for (m, (_, _, other)) in objects.iter().enumerate() {
                if m != k && pieces_collide(obj, other) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// True iff every configuration on the straight joint-space segment,
    /// sampled so no joint moves more than `resolution` between samples, is
    /// collision-free. Both endpoints are checked.
    pub fn edge_collision_free(
        &self,
        arms: &[ArmModel],
        from: &[JointConfig],
        to: &[JointConfig],
        resolution: f64,
    ) -> Result<bool, SceneError> {
        assert!(resolution > 0.0, "edge resolution must be positive");
        self.check_arms(arms, from)?;
        self.check_arms(arms, to)?;
        let max_delta = from
            .iter()
            .zip(to)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let steps = (max_delta / resolution).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let s = k as f64 / steps as f64;
            let q: Vec<JointConfig> = from.iter().zip(to).map(|(a, b)| a.lerp(b, s)).collect();
            if !self.config_collision_free(arms, &q)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

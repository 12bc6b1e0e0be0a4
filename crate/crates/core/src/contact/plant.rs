use nalgebra::{Matrix6, Vector6};

use super::model::{sum_wrench, ContactFlags, ContactPoint, PegHoleModel, WrenchFrame, WrenchSample};
use super::sensor::{Sensor, SensorModel};
use super::ContactError;
use crate::math::{Pose, Rotation, Vec3};

/// Largest commanded translation per quasi-static substep (m).
pub const SUBSTEP_TRANSLATION: f64 = 2.5e-4;
/// Largest commanded rotation per quasi-static substep (rad).
pub const SUBSTEP_ROTATION: f64 = 0.5 * std::f64::consts::PI / 180.0;

const MAX_SOLVER_ITERATIONS: usize = 60;

/// Quasi-static plant state. The peg hangs from the commanded hand through a
/// linear/angular wrist spring; `hand` is the deflected hand pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub commanded: Pose,
    pub hand: Pose,
    /// Peg frame in the hand frame.
    pub grasp: Pose,
    pub peg: Pose,
    pub flags: ContactFlags,
    /// Latched once the tip face enters a hole outline; cleared when the tip leaves upward.
    pub engaged: bool,
    pub insertion_depth: f64,
    /// Depth at which a jammed peg is stopped, once jamming has occurred.
    pub jam_floor: Option<f64>,
}

impl SimState {
    /// Settle the peg under `commanded` starting from the undeflected pose.
    pub fn new(model: &PegHoleModel, commanded: Pose, grasp: Pose) -> Self {
        let mut s = Self {
            commanded,
            hand: commanded,
            grasp,
            peg: commanded.compose(&grasp),
            flags: ContactFlags::default(),
            engaged: false,
            insertion_depth: 0.0,
            jam_floor: None,
        };
        let mut scratch = Vec::new();
        s.hand = equilibrium(model, &commanded, &grasp, &commanded, None, &mut scratch);
        s.refresh(model, &mut scratch);
        s
    }

    pub fn jammed(&self) -> bool {
        self.jam_floor.is_some()
    }

    fn refresh(&mut self, model: &PegHoleModel, scratch: &mut Vec<ContactPoint>) {
        self.peg = self.hand.compose(&self.grasp);
        model.contacts(&self.peg, self.jam_floor, scratch);
        self.flags = ContactFlags::from_contacts(scratch);
        let h = model.tip_height(&self.peg);
        if h >= 0.0 {
            self.engaged = false;
        } else if !self.engaged && model.tip_inside_outline(&self.peg, 0.5 * model.clearance) {
            self.engaged = true;
        }
        self.insertion_depth = if self.engaged { (-h).clamp(0.0, model.hole_depth) } else { 0.0 };
        if self.engaged && self.jam_floor.is_none() && model.tilt(&self.peg) > model.jamming_angle {
            let to_hole = model.hole_frame.inverse().compose(&self.peg);
            let deepest = model
                .tip_samples()
                .iter()
                .map(|q| -to_hole.transform_point(q).z)
                .fold(0.0, f64::max);
            self.jam_floor = Some(deepest.min(model.hole_depth));
        }
    }
}

fn wrist_energy(model: &PegHoleModel, commanded: &Pose, hand: &Pose, contacts: &[ContactPoint]) -> f64 {
    let dt = hand.translation - commanded.translation;
    let dw = (hand.rotation * commanded.rotation.transpose()).log();
    let contact: f64 = contacts.iter().map(|c| c.stiffness * c.depth * c.depth).sum();
    0.5 * (model.wrist_stiffness * dt.norm_squared() + model.wrist_angular_stiffness * dw.norm_squared() + contact)
}

/// Minimize wrist-spring plus penalty energy over the hand pose (damped Gauss-Newton).
fn equilibrium(
    model: &PegHoleModel,
    commanded: &Pose,
    grasp: &Pose,
    start: &Pose,
    floor: Option<f64>,
    scratch: &mut Vec<ContactPoint>,
) -> Pose {
    let mut hand = *start;
    model.contacts(&hand.compose(grasp), floor, scratch);
    let mut energy = wrist_energy(model, commanded, &hand, scratch);
    let mut lambda = 1e-3;
    for _ in 0..MAX_SOLVER_ITERATIONS {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        let kw = model.wrist_stiffness;
        let kr = model.wrist_angular_stiffness;
        let rt = hand.translation - commanded.translation;
        let rw = (hand.rotation * commanded.rotation.transpose()).log();
        for i in 0..3 {
            h[(i, i)] += kw;
            h[(i + 3, i + 3)] += kr;
            g[i] += kw * rt[i];
            g[i + 3] += kr * rw[i];
        }
        for c in scratch.iter() {
            let lever = (c.position - hand.translation).cross(&c.normal);
            let j = Vector6::new(-c.normal.x, -c.normal.y, -c.normal.z, -lever.x, -lever.y, -lever.z);
            h += j * j.transpose() * c.stiffness;
            g += j * (c.stiffness * c.depth);
        }
        let mut accepted = false;
        for _ in 0..12 {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] *= 1.0 + lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-g));
            let dt = Vec3::new(step[0], step[1], step[2]);
            let dw = Vec3::new(step[3], step[4], step[5]);
            let trial = Pose::new(
                (Rotation::from_rotation_vector(&dw) * hand.rotation).renormalized(),
                hand.translation + dt,
            );
            model.contacts(&trial.compose(grasp), floor, scratch);
            let e = wrist_energy(model, commanded, &trial, scratch);
            if e <= energy {
                let small = dt.norm() < 1e-11 && dw.norm() < 1e-9;
                hand = trial;
                energy = e;
                lambda = (lambda * 0.3).max(1e-9);
                accepted = true;
                if small {
                    return hand;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    model.contacts(&hand.compose(grasp), floor, scratch);
    hand
}

/// Advance the plant to a new commanded hand pose.
///
/// The command is split into substeps of at most [`SUBSTEP_TRANSLATION`] and
/// [`SUBSTEP_ROTATION`], each settled to force balance from the previous one.
/// The returned wrench is world-frame and noiseless, torque about the
/// commanded hand origin.
pub fn step(sim: &SimState, commanded: &Pose, model: &PegHoleModel) -> (SimState, WrenchSample) {
    let mut scratch = Vec::new();
    let mut next = sim.clone();
    let from = sim.commanded;
    let motion = commanded.translation - from.translation;
    let turn = (commanded.rotation * from.rotation.transpose()).log();
    let n = ((motion.norm() / SUBSTEP_TRANSLATION).ceil().max((turn.norm() / SUBSTEP_ROTATION).ceil()) as usize).max(1);
    for k in 1..=n {
        let a = k as f64 / n as f64;
        let cmd = if k == n {
            *commanded
        } else {
            Pose::new(
                (Rotation::from_rotation_vector(&(turn * a)) * from.rotation).renormalized(),
                from.translation + motion * a,
            )
        };
        // Carry the current deflection over to the new command as the warm start.
        let start = cmd.compose(&next.commanded.inverse().compose(&next.hand));
        next.hand = equilibrium(model, &cmd, &next.grasp, &start, next.jam_floor, &mut scratch);
        next.commanded = cmd;
        next.refresh(model, &mut scratch);
    }
    let dir = if motion.norm() > 0.0 { Some(motion) } else { None };
    let reference = commanded.translation;
    let (force, torque) = sum_wrench(&scratch, model.friction, dir.as_ref(), &reference);
    (next, WrenchSample { force, torque, frame: WrenchFrame::World, reference, noisy: false })
}

/// A plant instance: model, state and a seeded sensor.
#[derive(Debug, Clone)]
pub struct Plant {
    model: PegHoleModel,
    state: SimState,
    sensor: Sensor,
    last: WrenchSample,
}

impl Plant {
    pub fn new(model: PegHoleModel, grasp: Pose, start_hand: Pose, sensor: SensorModel) -> Result<Self, ContactError> {
        let state = SimState::new(&model, start_hand, grasp);
        let reference = start_hand.translation;
        Ok(Self { model, state, sensor: Sensor::new(sensor)?, last: WrenchSample::zero(WrenchFrame::World, reference) })
    }

    pub fn model(&self) -> &PegHoleModel {
        &self.model
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Last noiseless world-frame wrench.
    pub fn true_wrench(&self) -> &WrenchSample {
        &self.last
    }

    /// Move to `hand` and return the noisy hand-frame reading.
    pub fn command(&mut self, hand: &Pose) -> WrenchSample {
        let (state, wrench) = step(&self.state, hand, &self.model);
        self.state = state;
        self.last = wrench;
        self.sensor.sense(&wrench, hand)
    }
}

//! Three-stage compliant insertion: linear search, spiral search, impedance control.
//!
//! The controller only sees commanded hand poses and hand-frame wrench readings,
//! through [`InsertionPlant`]. Hand orientation is never changed by the controller.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{Plant, WrenchSample};
use crate::math::{plane_basis, Pose, Rotation, Vec3};

/// The environment as seen by the controller.
pub trait InsertionPlant {
    /// Command the hand and return the sensed wrench in the hand frame.
    fn command(&mut self, hand: &Pose) -> WrenchSample;
    /// Depth of the peg tip below the hole mouth; zero until engaged.
    fn insertion_depth(&self) -> f64;
    /// Whether the peg tip has entered a hole outline.
    fn engaged(&self) -> bool;
}

impl InsertionPlant for Plant {
    fn command(&mut self, hand: &Pose) -> WrenchSample {
        Plant::command(self, hand)
    }

    fn insertion_depth(&self) -> f64 {
        self.state().insertion_depth
    }

    fn engaged(&self) -> bool {
        self.state().engaged
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("impedance denominator is zero on axis {axis}")]
    ZeroDenominator { axis: usize },
    #[error("linear search found no contact within {steps} steps")]
    LinearBudget { steps: usize },
    #[error("spiral search exhausted after {probes} probes (radius {radius:.4} m)")]
    SpiralExhausted { probes: usize, radius: f64 },
    #[error("impedance insertion reached depth {depth:.4} m of {target:.4} m in {steps} steps")]
    ImpedanceBudget { steps: usize, depth: f64, target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Linear,
    Spiral,
    Impedance,
    Done,
    Failed,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Linear => "linear",
            Phase::Spiral => "spiral",
            Phase::Impedance => "impedance",
            Phase::Done => "done",
            Phase::Failed => "failed",
        }
    }

    /// Position in the Linear → Spiral → Impedance → Done order.
    fn rank(&self) -> u8 {
        match self {
            Phase::Linear => 0,
            Phase::Spiral => 1,
            Phase::Impedance => 2,
            Phase::Done => 3,
            Phase::Failed => 4,
        }
    }

    /// Allowed transitions: one stage forward, or any stage to Failed.
    pub fn can_follow(&self, prev: &Phase) -> bool {
        match (prev, self) {
            (Phase::Done | Phase::Failed, _) => false,
            (_, Phase::Failed) => true,
            (p, n) => n.rank() == p.rank() || n.rank() == p.rank() + 1,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpiralMode {
    /// Each offset is added to the previous position.
    #[default]
    Literal,
    /// Each offset is taken from the spiral center.
    Centered,
}

impl std::str::FromStr for SpiralMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "literal" => Ok(SpiralMode::Literal),
            "centered" => Ok(SpiralMode::Centered),
            other => Err(format!("unknown spiral mode {other:?} (expected literal|centered)")),
        }
    }
}

/// When a spiral probe counts as having found the hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpiralExit {
    /// Pressing force drops below `spiral_exit_threshold`.
    #[default]
    ForceDrop,
    /// Pressing force exceeds `spiral_exit_threshold`.
    ForceExceeds,
}

/// Which force enters the stop test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceSign {
    /// The force the hand applies, i.e. the negated sensor reading.
    #[default]
    Applied,
    /// The raw sensor reading.
    Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    #[default]
    Signed,
    Absolute,
}

/// Per-axis value with a scalar shorthand in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Triple {
    Scalar(f64),
    Axes([f64; 3]),
}

impl Triple {
    pub fn axes(&self) -> [f64; 3] {
        match *self {
            Triple::Scalar(v) => [v; 3],
            Triple::Axes(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceGains {
    pub m: Triple,
    pub c: Triple,
    pub k: Triple,
}

impl Default for ImpedanceGains {
    fn default() -> Self {
        Self { m: Triple::Scalar(1.0), c: Triple::Scalar(50.0), k: Triple::Scalar(200.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Unit insertion direction, world frame.
    pub v_direction: [f64; 3],
    /// Linear-search stop force (N).
    pub linear_threshold: f64,
    /// Spiral exit force (N).
    pub spiral_exit_threshold: f64,
    pub spiral_exit: SpiralExit,
    pub force_sign: ForceSign,
    pub comparison: Comparison,
    pub spiral_mode: SpiralMode,
    pub delta_theta: f64,
    /// Explicit radius increment (m); derived from `spiral_pitch` when absent.
    pub delta_r: Option<f64>,
    /// Radial growth per revolution (m) used to derive `delta_r` for the active mode.
    pub spiral_pitch: f64,
    pub max_spiral_radius: f64,
    pub linear_step: f64,
    /// Height above the contact plane between spiral probes (m).
    pub spiral_lift: f64,
    /// Probe depth beyond the contact plane (m).
    pub press_depth: f64,
    /// Axial advance per impedance step (m).
    pub feed: f64,
    /// Pressing force (N) above which the axial feed pauses.
    pub feed_force_limit: f64,
    pub gains: ImpedanceGains,
    pub dt: f64,
    pub target_insertion_depth: f64,
    pub max_linear_steps: usize,
    pub max_spiral_probes: usize,
    pub max_impedance_steps: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v_direction: [0.0, 0.0, -1.0],
            linear_threshold: 5.0,
            spiral_exit_threshold: 7.0,
            spiral_exit: SpiralExit::ForceDrop,
            force_sign: ForceSign::Applied,
            comparison: Comparison::Signed,
            spiral_mode: SpiralMode::Literal,
            delta_theta: 0.12,
            delta_r: None,
            spiral_pitch: 6.0e-4,
            max_spiral_radius: 5.0e-3,
            linear_step: 1.0e-3,
            spiral_lift: 3.0e-3,
            press_depth: 1.5e-3,
            feed: 5.0e-4,
            feed_force_limit: 20.0,
            gains: ImpedanceGains::default(),
            dt: 0.02,
            target_insertion_depth: 8.0e-3,
            max_linear_steps: 60,
            max_spiral_probes: 2000,
            max_impedance_steps: 400,
        }
    }
}

impl ControllerConfig {
    pub fn v(&self) -> Vec3 {
        Vec3::from(self.v_direction)
    }

    /// Radius increment per probe for the active mode.
    ///
    /// Centered offsets have magnitude `√2·r`, so one revolution grows the radius
    /// by `2π√2·δr/δθ`. Literal accumulation divides that by another `δθ`.
    pub fn effective_delta_r(&self) -> f64 {
        if let Some(dr) = self.delta_r {
            return dr;
        }
        let per_rev = 2.0 * std::f64::consts::PI * std::f64::consts::SQRT_2 / self.delta_theta;
        match self.spiral_mode {
            SpiralMode::Centered => self.spiral_pitch / per_rev,
            SpiralMode::Literal => self.spiral_pitch * self.delta_theta / per_rev,
        }
    }

    /// Probes per revolution, rounded up.
    pub fn probes_per_revolution(&self) -> usize {
        (2.0 * std::f64::consts::PI / self.delta_theta).ceil() as usize
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be > 0 (got {v})"));
            }
        };
        positive("linear_threshold", self.linear_threshold);
        positive("spiral_exit_threshold", self.spiral_exit_threshold);
        positive("delta_theta", self.delta_theta);
        positive("spiral_pitch", self.spiral_pitch);
        positive("max_spiral_radius", self.max_spiral_radius);
        positive("linear_step", self.linear_step);
        positive("press_depth", self.press_depth);
        positive("feed", self.feed);
        positive("feed_force_limit", self.feed_force_limit);
        positive("dt", self.dt);
        positive("target_insertion_depth", self.target_insertion_depth);
        if !(self.spiral_lift.is_finite() && self.spiral_lift >= 0.0) {
            out.push(format!("spiral_lift must be >= 0 (got {})", self.spiral_lift));
        }
        if let Some(dr) = self.delta_r {
            if !(dr.is_finite() && dr >= 0.0) {
                out.push(format!("delta_r must be >= 0 (got {dr})"));
            }
        }
        let v = self.v();
        if !((v.norm() - 1.0).abs() < 1e-9) {
            out.push(format!("v_direction must be a unit vector (norm {})", v.norm()));
        }
        for (name, n) in [
            ("max_linear_steps", self.max_linear_steps),
            ("max_spiral_probes", self.max_spiral_probes),
            ("max_impedance_steps", self.max_impedance_steps),
        ] {
            if n == 0 {
                out.push(format!("{name} must be >= 1"));
            }
        }
        let (m, c, k) = (self.gains.m.axes(), self.gains.c.axes(), self.gains.k.axes());
        for i in 0..3 {
            if [m[i], c[i], k[i]].iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                out.push(format!("gains on axis {i} must be finite and >= 0"));
            } else if self.dt > 0.0 && !(m[i] / (self.dt * self.dt) + c[i] / self.dt + k[i] > 0.0) {
                out.push(format!("gains on axis {i} give a zero impedance denominator"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let v = self.violations();
        if v.is_empty() { Ok(()) } else { Err(ControlError::InvalidConfig(v.join("; "))) }
    }

    /// Force entering the stop tests, rotated into the world frame.
    fn pressing_force(&self, rotation: &Rotation, sensed: &Vec3) -> Vec3 {
        let f = match self.force_sign {
            ForceSign::Applied => -sensed,
            ForceSign::Reaction => *sensed,
        };
        rotation.apply(&f)
    }

    fn exceeds(&self, value: f64, threshold: f64) -> bool {
        match self.comparison {
            Comparison::Signed => value > threshold,
            Comparison::Absolute => value.abs() > threshold,
        }
    }
}

/// Stop test of the linear search: `v · (R·F) > threshold`.
pub fn linear_stop_condition(v_direction: &Vec3, r_hnd: &Rotation, f: &Vec3, threshold: f64) -> bool {
    v_direction.dot(&r_hnd.apply(f)) > threshold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralState {
    pub center: Vec3,
    pub position: Vec3,
    pub r: f64,
    pub theta: f64,
    pub index: usize,
}

impl SpiralState {
    pub fn new(center: Vec3) -> Self {
        Self { center, position: center, r: 0.0, theta: 0.0, index: 0 }
    }

    /// Distance from the center, measured in the plane normal to `v`.
    pub fn in_plane_radius(&self, v: &Vec3) -> f64 {
        let d = self.position - self.center;
        (d - v * v.dot(&d)).norm()
    }
}

/// Next spiral probe position and state.
///
/// The offset `r·R(θ, v)·(e1 + e2)` uses the in-plane basis of `v`
/// (`x̂, ŷ` for `v = ẑ`), added to the previous position (literal) or the
/// center (centered).
pub fn spiral_next_position(state: &SpiralState, config: &ControllerConfig) -> Result<(Vec3, SpiralState), ControlError> {
    let v = config.v();
    let r = state.r + config.effective_delta_r();
    if r > config.max_spiral_radius {
        return Err(ControlError::SpiralExhausted { probes: state.index, radius: state.in_plane_radius(&v) });
    }
    let theta = state.theta + config.delta_theta;
    let (e1, e2) = plane_basis(&v);
    let rot = Rotation::rodrigues(theta, &v).map_err(|e| ControlError::InvalidConfig(e.to_string()))?;
    let offset = rot.apply(&(e1 + e2)) * r;
    let base = match config.spiral_mode {
        SpiralMode::Literal => state.position,
        SpiralMode::Centered => state.center,
    };
    let position = base + offset;
    Ok((position, SpiralState { center: state.center, position, r, theta, index: state.index + 1 }))
}

/// One step of the discrete impedance law, per axis:
/// `P⁺ = [F + m(2P − P⁻)/dt² + cP/dt + kP] / (m/dt² + c/dt + k)`.
pub fn impedance_update(f: &Vec3, p: &Vec3, p_prev: &Vec3, gains: &ImpedanceGains, dt: f64) -> Result<Vec3, ControlError> {
    let (m, c, k) = (gains.m.axes(), gains.c.axes(), gains.k.axes());
    let mut out = Vec3::zeros();
    for i in 0..3 {
        let a = m[i] / (dt * dt);
        let b = c[i] / dt;
        let den = a + b + k[i];
        if den == 0.0 || !den.is_finite() {
            return Err(ControlError::ZeroDenominator { axis: i });
        }
        out[i] = (f[i] + a * (2.0 * p[i] - p_prev[i]) + b * p[i] + k[i] * p[i]) / den;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub phase: Phase,
    pub position: Vec3,
    pub rotation: Rotation,
    pub force: Vec3,
    pub torque: Vec3,
}

/// Per-step log of commanded hand pose and sensed hand-frame wrench.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerTrace {
    pub records: Vec<TraceRecord>,
    pub dt: f64,
}

pub const TRACE_HEADER: &str = "t,phase,px,py,pz,fx,fy,fz,tx,ty,tz";

impl ControllerTrace {
    pub fn new(dt: f64) -> Self {
        Self { records: Vec::new(), dt }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, phase: Phase, hand: &Pose, w: &WrenchSample) {
        let t = (self.records.len() + 1) as f64 * self.dt;
        self.records.push(TraceRecord {
            t,
            phase,
            position: hand.translation,
            rotation: hand.rotation,
            force: w.force,
            torque: w.torque,
        });
    }

    /// Contiguous phase runs with their lengths, in order.
    pub fn phase_runs(&self) -> Vec<(Phase, usize)> {
        let mut runs: Vec<(Phase, usize)> = Vec::new();
        for r in &self.records {
            match runs.last_mut() {
                Some((p, n)) if *p == r.phase => *n += 1,
                _ => runs.push((r.phase, 1)),
            }
        }
        runs
    }

    pub fn steps_in(&self, phase: Phase) -> usize {
        self.records.iter().filter(|r| r.phase == phase).count()
    }

    /// Times strictly increase and phases follow the allowed transitions.
    pub fn is_well_formed(&self) -> bool {
        self.records.windows(2).all(|w| w[1].t > w[0].t && w[1].phase.can_follow(&w[0].phase))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{:.3},{},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.5},{:.5},{:.5}",
                r.t,
                r.phase,
                r.position.x,
                r.position.y,
                r.position.z,
                r.force.x,
                r.force.y,
                r.force.z,
                r.torque.x,
                r.torque.y,
                r.torque.z
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }
}

fn with_translation(pose: &Pose, t: Vec3) -> Pose {
    Pose::new(pose.rotation, t)
}

/// Translate along `v` in linear steps until the stop condition fires.
/// Returns the hand pose at the stop.
pub fn run_linear_search<P: InsertionPlant>(
    config: &ControllerConfig,
    plant: &mut P,
    start_pose: &Pose,
    trace: &mut ControllerTrace,
) -> Result<Pose, ControlError> {
    let v = config.v();
    let mut pose = *start_pose;
    for _ in 0..config.max_linear_steps {
        pose = with_translation(&pose, pose.translation + v * config.linear_step);
        let w = plant.command(&pose);
        trace.push(Phase::Linear, &pose, &w);
        let f = config.pressing_force(&pose.rotation, &w.force);
        if config.exceeds(v.dot(&f), config.linear_threshold) {
            return Ok(pose);
        }
    }
    Err(ControlError::LinearBudget { steps: config.max_linear_steps })
}

/// Outcome of a spiral search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralResult {
    /// Hand pose at the probe that found the hole.
    pub hole_pose: Pose,
    pub probes: usize,
}

/// Probe along the spiral from the contact pose until the hole is detected.
pub fn run_spiral_search<P: InsertionPlant>(
    config: &ControllerConfig,
    plant: &mut P,
    contact_pose: &Pose,
    trace: &mut ControllerTrace,
) -> Result<SpiralResult, ControlError> {
    let v = config.v();
    let mut state = SpiralState::new(contact_pose.translation);
    let per_rev = config.probes_per_revolution();
    let mut beyond = 0usize;
    for probe in 0..config.max_spiral_probes {
        if probe > 0 {
            let (p, next) = match spiral_next_position(&state, config) {
                Ok(x) => x,
                Err(_) => break,
            };
            state = next;
            if state.in_plane_radius(&v) > config.max_spiral_radius {
                beyond += 1;
                if beyond > per_rev {
                    break;
                }
            }
            let lift = with_translation(contact_pose, p - v * config.spiral_lift);
            let w = plant.command(&lift);
            trace.push(Phase::Spiral, &lift, &w);
        }
        let press = with_translation(contact_pose, state.position + v * config.press_depth);
        let w = plant.command(&press);
        trace.push(Phase::Spiral, &press, &w);
        let along = v.dot(&config.pressing_force(&press.rotation, &w.force));
        let found = match config.spiral_exit {
            SpiralExit::ForceDrop => along < config.spiral_exit_threshold || plant.engaged(),
            SpiralExit::ForceExceeds => config.exceeds(along, config.spiral_exit_threshold),
        };
        if found {
            return Ok(SpiralResult { hole_pose: press, probes: probe + 1 });
        }
    }
    Err(ControlError::SpiralExhausted { probes: state.index + 1, radius: state.in_plane_radius(&v) })
}

/// Feed along `v` while the lateral axes comply with the sensed force.
pub fn run_impedance_insertion<P: InsertionPlant>(
    config: &ControllerConfig,
    plant: &mut P,
    hole_pose: &Pose,
    trace: &mut ControllerTrace,
) -> Result<Pose, ControlError> {
    let v = config.v();
    let mut pose = *hole_pose;
    let mut prev = pose.translation;
    // Reading taken at the hole pose by the previous stage, if any.
    let mut sensed = trace
        .records
        .last()
        .filter(|r| r.position == pose.translation)
        .map_or_else(Vec3::zeros, |r| r.force);
    for _ in 0..config.max_impedance_steps {
        let world = pose.rotation.apply(&sensed);
        let lateral = world - v * v.dot(&world);
        let p = pose.translation;
        let upd = impedance_update(&lateral, &p, &prev, &config.gains, config.dt)?;
        let d = upd - p;
        let pressing = v.dot(&config.pressing_force(&pose.rotation, &sensed));
        let feed = if pressing > config.feed_force_limit { 0.0 } else { config.feed };
        let next = p + (d - v * v.dot(&d)) + v * feed;
        prev = p;
        pose = with_translation(&pose, next);
        let w = plant.command(&pose);
        trace.push(Phase::Impedance, &pose, &w);
        sensed = w.force;
        if plant.insertion_depth() >= config.target_insertion_depth {
            return Ok(pose);
        }
    }
    Err(ControlError::ImpedanceBudget {
        steps: config.max_impedance_steps,
        depth: plant.insertion_depth(),
        target: config.target_insertion_depth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InsertionOutcome {
    /// `Done`, or `Failed` with the stage that failed in `failed_phase`.
    pub phase: Phase,
    pub failed_phase: Option<Phase>,
    pub error: Option<ControlError>,
    pub final_pose: Pose,
    pub final_depth: f64,
    pub spiral_probes: usize,
}

impl InsertionOutcome {
    pub fn succeeded(&self) -> bool {
        self.phase == Phase::Done
    }
}

/// Linear → Spiral → Impedance from the pre-assembly hand pose.
pub fn run_insertion<P: InsertionPlant>(
    config: &ControllerConfig,
    plant: &mut P,
    pre_assembly_pose: &Pose,
) -> Result<(InsertionOutcome, ControllerTrace), ControlError> {
    config.validate()?;
    let mut trace = ControllerTrace::new(config.dt);
    let mut probes = 0;
    let result = (|| {
        let contact = run_linear_search(config, plant, pre_assembly_pose, &mut trace).map_err(|e| (Phase::Linear, e))?;
        let spiral = run_spiral_search(config, plant, &contact, &mut trace).map_err(|e| (Phase::Spiral, e))?;
        probes = spiral.probes;
        run_impedance_insertion(config, plant, &spiral.hole_pose, &mut trace).map_err(|e| (Phase::Impedance, e))
    })();
    let last_pose = trace
        .records
        .last()
        .map(|r| Pose::new(r.rotation, r.position))
        .unwrap_or(*pre_assembly_pose);
    let outcome = match result {
        Ok(pose) => InsertionOutcome {
            phase: Phase::Done,
            failed_phase: None,
            error: None,
            final_pose: pose,
            final_depth: plant.insertion_depth(),
            spiral_probes: probes,
        },
        Err((phase, e)) => {
            if let ControlError::SpiralExhausted { probes: n, .. } = e {
                probes = n;
            }
            InsertionOutcome {
                phase: Phase::Failed,
                failed_phase: Some(phase),
                error: Some(e),
                final_pose: last_pose,
                final_depth: plant.insertion_depth(),
                spiral_probes: probes,
            }
        }
    };
    Ok((outcome, trace))
}

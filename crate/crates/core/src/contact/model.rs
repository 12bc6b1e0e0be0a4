use serde::{Deserialize, Serialize};

use super::contour::{Contour, Vec2};
use super::ContactError;
use crate::math::{Pose, PoseSpec, Vec3};

/// One extruded pin of a (possibly compound) peg, placed in the peg frame's xy plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pin {
    pub contour: Contour,
    #[serde(default)]
    pub at: [f64; 2],
}

fn default_stiffness() -> f64 {
    5000.0
}
fn default_friction() -> f64 {
    0.3
}
fn default_chamfer() -> f64 {
    0.0005
}
fn default_jamming_deg() -> f64 {
    3.0
}
fn default_wrist_stiffness() -> f64 {
    1.0e4
}
fn default_wrist_angular_stiffness() -> f64 {
    100.0
}
fn default_ring_points() -> usize {
    24
}
fn default_rings() -> usize {
    5
}

/// Serialized peg/hole description. Holes mirror the pins, enlarged by `clearance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PegHoleSpec {
    pub pins: Vec<Pin>,
    pub clearance: f64,
    pub hole_depth: f64,
    pub peg_length: f64,
    #[serde(default)]
    pub hole_frame: PoseSpec,
    #[serde(default = "default_stiffness")]
    pub stiffness: f64,
    #[serde(default = "default_friction")]
    pub friction: f64,
    #[serde(default = "default_chamfer")]
    pub chamfer: f64,
    #[serde(default = "default_jamming_deg")]
    pub jamming_angle_deg: f64,
    #[serde(default = "default_wrist_stiffness")]
    pub wrist_stiffness: f64,
    #[serde(default = "default_wrist_angular_stiffness")]
    pub wrist_angular_stiffness: f64,
    #[serde(default = "default_ring_points")]
    pub ring_points: usize,
    #[serde(default = "default_rings")]
    pub rings: usize,
}

impl PegHoleSpec {
    /// A single pin with default material parameters and the hole frame at the origin.
    pub fn single(contour: Contour, clearance: f64, hole_depth: f64, peg_length: f64) -> Self {
        Self {
            pins: vec![Pin { contour, at: [0.0, 0.0] }],
            clearance,
            hole_depth,
            peg_length,
            hole_frame: PoseSpec::default(),
            stiffness: default_stiffness(),
            friction: default_friction(),
            chamfer: default_chamfer(),
            jamming_angle_deg: default_jamming_deg(),
            wrist_stiffness: default_wrist_stiffness(),
            wrist_angular_stiffness: default_wrist_angular_stiffness(),
            ring_points: default_ring_points(),
            rings: default_rings(),
        }
    }

    /// Every violated invariant, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be > 0 (got {v})"));
            }
        };
        if self.pins.is_empty() {
            out.push("pins must not be empty".into());
        }
        for (i, p) in self.pins.iter().enumerate() {
            if let Err(e) = p.contour.validate() {
                out.push(format!("pins[{i}]: {e}"));
            }
            if !p.at.iter().all(|v| v.is_finite()) {
                out.push(format!("pins[{i}].at must be finite"));
            }
        }
        positive("clearance", self.clearance, &mut out);
        positive("hole_depth", self.hole_depth, &mut out);
        positive("peg_length", self.peg_length, &mut out);
        positive("stiffness", self.stiffness, &mut out);
        positive("wrist_stiffness", self.wrist_stiffness, &mut out);
        positive("wrist_angular_stiffness", self.wrist_angular_stiffness, &mut out);
        positive("jamming_angle_deg", self.jamming_angle_deg, &mut out);
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            out.push(format!("friction must be >= 0 (got {})", self.friction));
        }
        if !(self.chamfer.is_finite() && self.chamfer >= 0.0) {
            out.push(format!("chamfer must be >= 0 (got {})", self.chamfer));
        }
        if self.ring_points < 4 {
            out.push("ring_points must be >= 4".into());
        }
        if self.rings < 2 {
            out.push("rings must be >= 2".into());
        }
        for i in 0..self.pins.len() {
            for j in i + 1..self.pins.len() {
                let (a, b) = (&self.pins[i], &self.pins[j]);
                let gap = Vec2::new(a.at[0] - b.at[0], a.at[1] - b.at[1]).abs();
                let reach = a.contour.half_extents() + b.contour.half_extents() + Vec2::repeat(2.0 * self.clearance);
                if gap.x < reach.x && gap.y < reach.y {
                    out.push(format!("holes of pins[{i}] and pins[{j}] overlap"));
                }
            }
        }
        out
    }

    pub fn build(&self) -> Result<PegHoleModel, ContactError> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(ContactError::InvalidModel(v.join("; ")));
        }
        let mut samples = Vec::new();
        let mut bottom = 0;
        for ring in 0..self.rings {
            let z = self.peg_length * ring as f64 / (self.rings - 1) as f64;
            for pin in &self.pins {
                let n = if matches!(pin.contour, Contour::Circle { .. }) {
                    self.ring_points
                } else {
                    self.ring_points + 4
                };
                for p in pin.contour.boundary_samples(n) {
                    samples.push(Vec3::new(p.x + pin.at[0], p.y + pin.at[1], z));
                    if ring == 0 {
                        bottom += 1;
                    }
                }
            }
        }
        Ok(PegHoleModel {
            pins: self.pins.clone(),
            clearance: self.clearance,
            hole_depth: self.hole_depth,
            peg_length: self.peg_length,
            hole_frame: self.hole_frame.to_pose(),
            stiffness: self.stiffness,
            friction: self.friction,
            chamfer: self.chamfer,
            jamming_angle: self.jamming_angle_deg.to_radians(),
            wrist_stiffness: self.wrist_stiffness,
            wrist_angular_stiffness: self.wrist_angular_stiffness,
            rings: self.rings,
            samples,
            bottom_samples: bottom,
        })
    }
}

/// Validated peg/hole geometry and contact parameters.
///
/// Peg frame: origin at the center of the tip face, +z toward the peg's far end.
/// Hole frame: origin on the top surface at the hole axis, +z out of the surface.
/// Hole `j` is pin `j`'s contour grown by `clearance`, at the same xy offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PegHoleModel {
    pub pins: Vec<Pin>,
    pub clearance: f64,
    pub hole_depth: f64,
    pub peg_length: f64,
    pub hole_frame: Pose,
    pub stiffness: f64,
    pub friction: f64,
    pub chamfer: f64,
    pub jamming_angle: f64,
    pub wrist_stiffness: f64,
    pub wrist_angular_stiffness: f64,
    rings: usize,
    samples: Vec<Vec3>,
    bottom_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WrenchFrame {
    Sensor,
    Hand,
    World,
}

/// Force and torque; the torque is taken about `reference`, a point in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchSample {
    pub force: Vec3,
    pub torque: Vec3,
    pub frame: WrenchFrame,
    pub reference: Vec3,
    pub noisy: bool,
}

impl WrenchSample {
    pub fn zero(frame: WrenchFrame, reference: Vec3) -> Self {
        Self { force: Vec3::zeros(), torque: Vec3::zeros(), frame, reference, noisy: false }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Surface,
    Chamfer,
    Wall,
    Bottom,
}

/// One penetrating sample point. `normal` points out of the material (world frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub depth: f64,
    pub stiffness: f64,
    pub kind: ContactKind,
}

impl ContactPoint {
    pub fn force(&self) -> Vec3 {
        self.normal * (self.stiffness * self.depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContactFlags {
    pub surface: bool,
    pub chamfer: bool,
    pub wall: bool,
    pub bottom: bool,
}

impl ContactFlags {
    pub fn any(&self) -> bool {
        self.surface || self.chamfer || self.wall || self.bottom
    }

    pub fn from_contacts(contacts: &[ContactPoint]) -> Self {
        let mut f = Self::default();
        for c in contacts {
            match c.kind {
                ContactKind::Surface => f.surface = true,
                ContactKind::Chamfer => f.chamfer = true,
                ContactKind::Wall => f.wall = true,
                ContactKind::Bottom => f.bottom = true,
            }
        }
        f
    }
}

/// Closest point of the segment `a`–`b` to `p`, in the (s, z) plane.
fn closest_on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let e = (b.0 - a.0, b.1 - a.1);
    let len2 = e.0 * e.0 + e.1 * e.1;
    let t = if len2 > 0.0 { (((p.0 - a.0) * e.0 + (p.1 - a.1) * e.1) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a.0 + e.0 * t, a.1 + e.1 * t)
}

/// Distance to the free region and the unit exit direction, in (s, z)
/// coordinates where `s` is the signed lateral distance outside the hole wall
/// and `z` the height above the top surface. Returns `(depth, ds, dz, kind)`.
///
/// The free region is everything above the surface, the chamfer wedge, and the
/// hole down to `bottom`.
fn penetration(s: f64, z: f64, chamfer: f64, bottom: f64) -> Option<(f64, f64, f64, ContactKind)> {
    if z >= 0.0 {
        return None;
    }
    let in_slab = s > (chamfer + z).max(0.0);
    if !(in_slab || z < bottom) {
        return None;
    }
    let p = (s, z);
    let wall_top = -chamfer.min(-bottom);
    let mut candidates: [Option<((f64, f64), ContactKind)>; 4] = [None; 4];
    candidates[0] = Some(((s.max(chamfer), 0.0), ContactKind::Surface));
    if chamfer > 0.0 {
        candidates[1] = Some((closest_on_segment(p, (chamfer, 0.0), (0.0, wall_top)), ContactKind::Chamfer));
    }
    if bottom < wall_top {
        candidates[2] = Some(((0.0, z.clamp(bottom, wall_top)), ContactKind::Wall));
    }
    if z < bottom {
        candidates[3] = Some(((s.min(0.0), bottom), ContactKind::Bottom));
    }
    let mut best: Option<(f64, f64, f64, ContactKind)> = None;
    for ((qs, qz), kind) in candidates.into_iter().flatten() {
        let (ds, dz) = (qs - s, qz - z);
        let d = (ds * ds + dz * dz).sqrt();
        if best.is_none_or(|b| d < b.0) {
            best = Some(if d > 0.0 { (d, ds / d, dz / d, kind) } else { (0.0, 0.0, 1.0, kind) });
        }
    }
    best
}

impl PegHoleModel {
    /// Sample points in the peg frame: one ring per height, tip ring first.
    pub fn samples(&self) -> &[Vec3] {
        &self.samples
    }

    pub fn tip_samples(&self) -> &[Vec3] {
        &self.samples[..self.bottom_samples]
    }

    fn face_stiffness(&self) -> f64 {
        self.stiffness / self.bottom_samples as f64
    }

    fn edge_stiffness(&self) -> f64 {
        self.stiffness / self.rings as f64
    }

    /// Signed distance to the nearest hole outline (clearance included) and its
    /// outward normal, for a point in hole-frame xy.
    pub fn hole_distance(&self, xy: &Vec2) -> (f64, Vec2) {
        let mut best = (f64::INFINITY, Vec2::x());
        for pin in &self.pins {
            let local = xy - Vec2::new(pin.at[0], pin.at[1]);
            let he = pin.contour.half_extents();
            let lower = (local.abs() - he).map(|v| v.max(0.0)).norm() - self.clearance;
            if lower >= best.0 {
                continue;
            }
            let (d, n) = pin.contour.signed_distance(&local);
            let d = d - self.clearance;
            if d < best.0 {
                best = (d, n);
            }
        }
        best
    }

    /// Penetrating sample points for a peg at `peg_pose`. `floor` raises the hole
    /// bottom to that depth below the surface.
    pub fn contacts(&self, peg_pose: &Pose, floor: Option<f64>, out: &mut Vec<ContactPoint>) {
        out.clear();
        let world_to_hole = self.hole_frame.inverse();
        let peg_in_hole = world_to_hole.compose(peg_pose);
        let bottom = -floor.unwrap_or(self.hole_depth).min(self.hole_depth);
        for q in &self.samples {
            let h = peg_in_hole.transform_point(q);
            if h.z >= 0.0 {
                continue;
            }
            let (s, n2) = self.hole_distance(&Vec2::new(h.x, h.y));
            let Some((depth, ds, dz, kind)) = penetration(s, h.z, self.chamfer, bottom) else {
                continue;
            };
            if depth <= 0.0 {
                continue;
            }
            let n_hole = Vec3::new(n2.x * ds, n2.y * ds, dz);
            let stiffness = match kind {
                ContactKind::Surface | ContactKind::Bottom => self.face_stiffness(),
                ContactKind::Chamfer | ContactKind::Wall => self.edge_stiffness(),
            };
            out.push(ContactPoint {
                position: peg_pose.transform_point(q),
                normal: self.hole_frame.transform_vector(&n_hole),
                depth,
                stiffness,
                kind,
            });
        }
    }

    /// Hole-frame signed distances of the tip ring to the hole outlines; all
    /// `<= tol` means the tip face sits inside the hole mouth.
    pub fn tip_inside_outline(&self, peg_pose: &Pose, tol: f64) -> bool {
        let peg_in_hole = self.hole_frame.inverse().compose(peg_pose);
        self.tip_samples().iter().all(|q| {
            let h = peg_in_hole.transform_point(q);
            self.hole_distance(&Vec2::new(h.x, h.y)).0 <= tol
        })
    }

    /// Angle between the peg axis and the hole axis.
    pub fn tilt(&self, peg_pose: &Pose) -> f64 {
        let a = peg_pose.rotation.z_axis();
        let b = self.hole_frame.rotation.z_axis();
        a.cross(&b).norm().atan2(a.dot(&b))
    }

    /// Height of the peg tip center above the top surface, along the hole axis.
    pub fn tip_height(&self, peg_pose: &Pose) -> f64 {
        (self.hole_frame.inverse().transform_point(&peg_pose.translation)).z
    }
}

/// Sum of penalty and friction forces, with torque about `reference`.
///
/// Friction on each point is `μ·|f_n|` against the tangential part of `motion`.
pub fn sum_wrench(contacts: &[ContactPoint], friction: f64, motion: Option<&Vec3>, reference: &Vec3) -> (Vec3, Vec3) {
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for c in contacts {
        let fn_ = c.force();
        let mut f = fn_;
        if let Some(u) = motion {
            let t = u - c.normal * c.normal.dot(u);
            let tn = t.norm();
            if tn > 1e-12 {
                f -= t * (friction * fn_.norm() / tn);
            }
        }
        force += f;
        torque += (c.position - reference).cross(&f);
    }
    (force, torque)
}

/// World-frame, noiseless penalty wrench on the peg, torque about the peg origin.
pub fn contact_wrench(peg_pose: &Pose, model: &PegHoleModel, motion: Option<&Vec3>) -> WrenchSample {
    let mut contacts = Vec::new();
    model.contacts(peg_pose, None, &mut contacts);
    let (force, torque) = sum_wrench(&contacts, model.friction, motion, &peg_pose.translation);
    WrenchSample { force, torque, frame: WrenchFrame::World, reference: peg_pose.translation, noisy: false }
}

//! Primitive-shape scene and the collision queries used by the planners.
//!
//! Geometry is limited to boxes, cylinders and compounds of those. Narrow
//! phase runs GJK on the convex pieces after an AABB rejection test. Exact
//! touching counts as a collision.

mod gjk;
mod scene;

pub use gjk::{distance as gjk_distance, Support};
pub use scene::{ArmModel, Attachment, LinkRef, Scene, SceneError};

use serde::{Deserialize, Serialize};

use crate::math::{Pose, PoseSpec, Vec3};

/// Separation at or below which two shapes are reported as colliding.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    /// Axis-aligned box in the local frame, given by half extents.
    Box { half_extents: Vec3 },
    /// Cylinder along the local z axis, centered at the local origin.
    Cylinder { radius: f64, half_height: f64 },
    Compound(Vec<ShapePrimitive>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapePrimitive {
    pub kind: ShapeKind,
    /// Placement relative to the owning body's frame.
    pub local: Pose,
}

impl ShapePrimitive {
    pub fn cuboid(half_extents: Vec3) -> Self {
        Self { kind: ShapeKind::Box { half_extents }, local: Pose::identity() }
    }

    pub fn cylinder(radius: f64, half_height: f64) -> Self {
        Self { kind: ShapeKind::Cylinder { radius, half_height }, local: Pose::identity() }
    }

    pub fn compound(children: Vec<ShapePrimitive>) -> Self {
        Self { kind: ShapeKind::Compound(children), local: Pose::identity() }
    }

    pub fn at(mut self, local: Pose) -> Self {
        self.local = local;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.kind {
            ShapeKind::Box { half_extents } => {
                if half_extents.iter().all(|&h| h > 0.0 && h.is_finite()) {
                    Ok(())
                } else {
                    Err(format!("box half extents must be positive, got {half_extents:?}"))
                }
            }
            ShapeKind::Cylinder { radius, half_height } => {
                if *radius > 0.0 && *half_height > 0.0 {
                    Ok(())
                } else {
                    Err(format!("cylinder dimensions must be positive (r={radius}, h/2={half_height})"))
                }
            }
            ShapeKind::Compound(children) => {
                if children.is_empty() {
                    return Err("compound shape needs at least one child".into());
                }
                children.iter().try_for_each(ShapePrimitive::validate)
            }
        }
    }

    /// Copy with every dimension grown by `margin` (used by property tests).
    pub fn inflated(&self, margin: f64) -> Self {
        let kind = match &self.kind {
            ShapeKind::Box { half_extents } => ShapeKind::Box { half_extents: half_extents.add_scalar(margin) },
            ShapeKind::Cylinder { radius, half_height } => {
                ShapeKind::Cylinder { radius: radius + margin, half_height: half_height + margin }
            }
            ShapeKind::Compound(children) => {
                ShapeKind::Compound(children.iter().map(|c| c.inflated(margin)).collect())
            }
        };
        Self { kind, local: self.local }
    }

    /// Flattens into convex pieces placed in the world via `body_pose`.
    pub fn convex_pieces(&self, body_pose: &Pose) -> Vec<ConvexPiece> {
        let mut out = Vec::new();
        self.collect(body_pose, &mut out);
        out
    }

    fn collect(&self, parent: &Pose, out: &mut Vec<ConvexPiece>) {
        let pose = parent.compose(&self.local);
        match &self.kind {
            ShapeKind::Box { half_extents } => out.push(ConvexPiece::new(Convex::Box(*half_extents), pose)),
            ShapeKind::Cylinder { radius, half_height } => {
                out.push(ConvexPiece::new(Convex::Cylinder { radius: *radius, half_height: *half_height }, pose))
            }
            ShapeKind::Compound(children) => children.iter().for_each(|c| c.collect(&pose, out)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convex {
    Box(Vec3),
    Cylinder { radius: f64, half_height: f64 },
}

/// One convex primitive posed in the world, with its cached bounding box.
#[derive(Debug, Clone, Copy)]
pub struct ConvexPiece {
    pub convex: Convex,
    pub pose: Pose,
    pub aabb_min: Vec3,
    pub aabb_max: Vec3,
}

impl ConvexPiece {
    pub fn new(convex: Convex, pose: Pose) -> Self {
        let m = pose.rotation.matrix();
        let half = match convex {
            Convex::Box(h) => m.abs() * h,
            Convex::Cylinder { radius, half_height } => {
                let axis = pose.rotation.z_axis();
                axis.map(|a| half_height * a.abs() + radius * (1.0 - a * a).max(0.0).sqrt())
            }
        };
        Self { convex, pose, aabb_min: pose.translation - half, aabb_max: pose.translation + half }
    }

    fn aabb_overlaps(&self, other: &ConvexPiece) -> bool {
        (0..3).all(|i| {
            self.aabb_min[i] <= other.aabb_max[i] + CONTACT_TOLERANCE
                && other.aabb_min[i] <= self.aabb_max[i] + CONTACT_TOLERANCE
        })
    }

    pub fn distance(&self, other: &ConvexPiece) -> f64 {
        gjk::distance(self, other)
    }

    pub fn collides(&self, other: &ConvexPiece) -> bool {
        self.aabb_overlaps(other) && self.distance(other) <= CONTACT_TOLERANCE
    }
}

impl Support for ConvexPiece {
    fn support(&self, dir: &Vec3) -> Vec3 {
        let local_dir = self.pose.rotation.transpose().apply(dir);
        let local = match self.convex {
            Convex::Box(h) => Vec3::new(
                h.x.copysign(local_dir.x),
                h.y.copysign(local_dir.y),
                h.z.copysign(local_dir.z),
            ),
            Convex::Cylinder { radius, half_height } => {
                let radial = (local_dir.x * local_dir.x + local_dir.y * local_dir.y).sqrt();
                let (x, y) = if radial > 1e-300 {
                    (radius * local_dir.x / radial, radius * local_dir.y / radial)
                } else {
                    (0.0, 0.0)
                };
                Vec3::new(x, y, half_height.copysign(local_dir.z))
            }
        };
        self.pose.transform_point(&local)
    }

    fn center(&self) -> Vec3 {
        self.pose.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyKind {
    RobotLink,
    Object,
    StaticEnvironment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub id: String,
    pub shape: ShapePrimitive,
    pub pose: Pose,
    pub kind: BodyKind,
}

impl Body {
    pub fn new(id: impl Into<String>, shape: ShapePrimitive, pose: Pose, kind: BodyKind) -> Self {
        Self { id: id.into(), shape, pose, kind }
    }

    pub fn pieces(&self) -> Vec<ConvexPiece> {
        self.shape.convex_pieces(&self.pose)
    }
}

/// True iff the two bodies overlap (or touch) at their current poses.
pub fn pair_collides(a: &Body, b: &Body) -> bool {
    pieces_collide(&a.pieces(), &b.pieces())
}

pub(crate) fn pieces_collide(a: &[ConvexPiece], b: &[ConvexPiece]) -> bool {
    a.iter().any(|p| b.iter().any(|q| p.collides(q)))
}

/// Serialized shape used by scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Box {
        half_extents: [f64; 3],
        #[serde(default)]
        pose: PoseSpec,
    },
    Cylinder {
        radius: f64,
        half_height: f64,
        #[serde(default)]
        pose: PoseSpec,
    },
    Compound {
        children: Vec<ShapeSpec>,
        #[serde(default)]
        pose: PoseSpec,
    },
}

impl ShapeSpec {
    pub fn build(&self) -> ShapePrimitive {
        match self {
            ShapeSpec::Box { half_extents, pose } => {
                ShapePrimitive::cuboid(Vec3::from(*half_extents)).at(pose.to_pose())
            }
            ShapeSpec::Cylinder { radius, half_height, pose } => {
                ShapePrimitive::cylinder(*radius, *half_height).at(pose.to_pose())
            }
            ShapeSpec::Compound { children, pose } => {
                ShapePrimitive::compound(children.iter().map(ShapeSpec::build).collect()).at(pose.to_pose())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rotation;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn unit_box_at(p: Vec3) -> Body {
        Body::new("b", ShapePrimitive::cuboid(Vec3::repeat(0.5)), Pose::from_translation(p), BodyKind::Object)
    }

    #[test]
    fn distant_boxes_do_not_collide() {
        assert!(!pair_collides(&unit_box_at(Vec3::zeros()), &unit_box_at(Vec3::new(10.0, 0.0, 0.0))));
    }

    #[test]
    fn coincident_boxes_collide() {
        assert!(pair_collides(&unit_box_at(Vec3::zeros()), &unit_box_at(Vec3::zeros())));
    }

    #[test]
    fn face_touching_counts_as_collision() {
        assert!(pair_collides(&unit_box_at(Vec3::zeros()), &unit_box_at(Vec3::new(1.0, 0.0, 0.0))));
        assert!(!pair_collides(&unit_box_at(Vec3::zeros()), &unit_box_at(Vec3::new(1.0 + 1e-6, 0.0, 0.0))));
    }

    /// Box yawed 45° so a vertical edge points at a vertical cylinder.
    /// Analytic gap: center distance − cylinder radius − half diagonal.
    #[test]
    fn box_corner_grazing_cylinder() {
        let h = 0.2;
        let r = 0.15;
        let bx = Body::new(
            "box",
            ShapePrimitive::cuboid(Vec3::new(h, h, 0.3)),
            Pose::from_rotation(Rotation::about_z(FRAC_PI_4)),
            BodyKind::Object,
        );
        let tangency = r + h * 2f64.sqrt();
        let eps = 1e-6;
        let cyl_at = |x: f64| {
            Body::new("cyl", ShapePrimitive::cylinder(r, 0.5), Pose::from_translation(Vec3::new(x, 0.0, 0.1)), BodyKind::StaticEnvironment)
        };
        assert!(pair_collides(&bx, &cyl_at(tangency - eps)));
        assert!(!pair_collides(&bx, &cyl_at(tangency + eps)));
        // and the measured gap agrees with the analytic one
        let d = bx.pieces()[0].distance(&cyl_at(tangency + 1e-3).pieces()[0]);
        assert!((d - 1e-3).abs() < 1e-9, "gap {d}");
    }

    #[test]
    fn tilted_cylinder_end_cap_distance() {
        // Cylinder lying along x; its rim is the closest feature to a box above it.
        let cyl = Body::new(
            "c",
            ShapePrimitive::cylinder(0.1, 0.4),
            Pose::from_rotation(Rotation::about_y(std::f64::consts::FRAC_PI_2)),
            BodyKind::Object,
        );
        let bx = unit_box_at(Vec3::new(0.0, 0.0, 0.1 + 0.5 + 0.02));
        let d = cyl.pieces()[0].distance(&bx.pieces()[0]);
        assert!((d - 0.02).abs() < 1e-9);
    }

    #[test]
    fn compound_collides_if_any_child_does() {
        let shape = ShapePrimitive::compound(vec![
            ShapePrimitive::cuboid(Vec3::repeat(0.1)).at(Pose::from_translation(Vec3::new(-1.0, 0.0, 0.0))),
            ShapePrimitive::cylinder(0.1, 0.1).at(Pose::from_translation(Vec3::new(1.0, 0.0, 0.0))),
        ]);
        let body = Body::new("c", shape, Pose::identity(), BodyKind::Object);
        assert!(pair_collides(&body, &unit_box_at(Vec3::new(1.5, 0.0, 0.0))));
        assert!(!pair_collides(&body, &unit_box_at(Vec3::new(0.0, 0.0, 0.0))));
    }

    #[test]
    fn shape_validation() {
        assert!(ShapePrimitive::cuboid(Vec3::new(1.0, 0.0, 1.0)).validate().is_err());
        assert!(ShapePrimitive::cylinder(0.1, -1.0).validate().is_err());
        assert!(ShapePrimitive::compound(vec![]).validate().is_err());
    }

    fn arb_body() -> impl Strategy<Value = Body> {
        (
            prop_oneof![
                (0.05..0.5f64, 0.05..0.5f64, 0.05..0.5f64)
                    .prop_map(|(a, b, c)| ShapePrimitive::cuboid(Vec3::new(a, b, c))),
                (0.05..0.5f64, 0.05..0.5f64).prop_map(|(r, h)| ShapePrimitive::cylinder(r, h)),
            ],
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
            (-3.0..3.0f64, -1.5..1.5f64, -3.0..3.0f64),
        )
            .prop_map(|(shape, (x, y, z), (r, p, yaw))| {
                Body::new("x", shape, Pose::new(Rotation::from_rpy(r, p, yaw), Vec3::new(x, y, z)), BodyKind::Object)
            })
    }

    /// A wrist cylinder 39 mm from a palm box once produced a flat GJK
    /// simplex that was mistaken for an enclosing one.
    #[test]
    fn flat_simplex_is_not_overlap() {
        let pose = |m: [f64; 9], t: [f64; 3]| {
            Pose::new(Rotation::from_matrix(nalgebra::Matrix3::from_row_slice(&m)).unwrap(), Vec3::from(t))
        };
        let cyl = ConvexPiece::new(
            Convex::Cylinder { radius: 0.03, half_height: 0.01150000000000001 },
            pose(
                [
                    0.8774396839089581, -0.3279318298224584, 0.3500861552404521, -0.3279318298224584, 0.1225603160910419,
                    0.9367175048588332, -0.3500861552404521, -0.9367175048588332, 0.0,
                ],
                [0.16427525584929223, 0.31173193329000065, 0.43033231027221247],
            ),
        );
        let cube = ConvexPiece::new(
            Convex::Box(Vec3::new(0.03, 0.05, 0.05)),
            pose(
                [
                    0.7111113731792702, -0.4532460509119319, 0.5374836111620809, -0.45324606658460975, 0.28888862108676155,
                    0.8432741948691237, -0.5374835979457159, -0.8432742032929312, -5.733968061366439e-9,
                ],
                [0.2110528501021844, 0.4012021606337348, 0.5133323099281744],
            ),
        );
        let d = cyl.distance(&cube);
        assert!((d - 0.0391).abs() < 2e-4, "{d}");
        assert!(!cyl.collides(&cube));
    }

    proptest! {
        #[test]
        fn collision_is_symmetric(a in arb_body(), b in arb_body()) {
            prop_assert_eq!(pair_collides(&a, &b), pair_collides(&b, &a));
        }

        #[test]
        fn growth_never_removes_collision(a in arb_body(), b in arb_body(), m in 0.0..0.2f64) {
            if pair_collides(&a, &b) {
                let grown = Body { shape: a.shape.inflated(m), ..a.clone() };
                prop_assert!(pair_collides(&grown, &b));
            }
        }

        #[test]
        fn gjk_distance_is_symmetric(a in arb_body(), b in arb_body()) {
            let (pa, pb) = (a.pieces()[0], b.pieces()[0]);
            prop_assert!((pa.distance(&pb) - pb.distance(&pa)).abs() < 1e-7);
        }

        /// Cylinder-box distance against a sampled-cylinder oracle, with
        /// quarter-turn orientations so caps and faces are often parallel.
        #[test]
        fn gjk_matches_sampled_distance(
            (radius, hh) in (0.01..0.04f64, 0.005..0.03f64),
            h in (0.01..0.06f64, 0.01..0.06f64, 0.01..0.06f64),
            turns in (0..4u8, 0..4u8, 0..4u8),
            tilt in prop_oneof![Just(0.0), -0.3..0.3f64],
            t in (-0.12..0.12f64, -0.12..0.12f64, -0.12..0.12f64),
        ) {
            let q = |k: u8| f64::from(k) * FRAC_PI_2;
            let rot = Rotation::from_rpy(q(turns.0) + tilt, q(turns.1), q(turns.2));
            let cyl = ConvexPiece::new(Convex::Cylinder { radius, half_height: hh }, Pose::new(rot, Vec3::new(t.0, t.1, t.2)));
            let half = Vec3::new(h.0, h.1, h.2);
            let cube = ConvexPiece::new(Convex::Box(half), Pose::identity());
            let (nt, nz, nr) = (48, 12, 4);
            let mut brute = f64::INFINITY;
            for i in 0..nt {
                let th = i as f64 / nt as f64 * std::f64::consts::TAU;
                for j in 0..=nz {
                    let z = -hh + 2.0 * hh * j as f64 / nz as f64;
                    for k in 0..=nr {
                        let r = radius * k as f64 / nr as f64;
                        let p = cyl.pose.transform_point(&Vec3::new(r * th.cos(), r * th.sin(), z));
                        brute = brute.min(p.abs().zip_map(&half, |a, b| (a - b).max(0.0)).norm());
                    }
                }
            }
            let spacing = ((PI * radius / nt as f64).powi(2) * 4.0 + (hh / nz as f64).powi(2) + (radius / (2 * nr) as f64).powi(2)).sqrt();
            let d = cyl.distance(&cube);
            prop_assert!(d <= brute + 1e-9, "gjk {} > sampled {}", d, brute);
            prop_assert!(d >= brute - spacing, "gjk {} << sampled {}", d, brute);
        }
    }
}

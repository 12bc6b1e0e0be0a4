//! Rigid-body math: rotations built with Rodrigues' formula and pose algebra.
//!
//! Rotations are kept as plain 3x3 matrices. Every constructor that can
//! accumulate floating-point drift re-orthonormalizes once the deviation from
//! orthonormality exceeds [`ORTHO_DRIFT_TOL`].

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Allowed deviation of `RᵀR` from identity before re-orthonormalizing.
pub const ORTHO_DRIFT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("rotation axis has zero norm")]
    DegenerateAxis,
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
}

/// Skew-symmetric cross-product matrix `[v×]`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A proper rotation stored as a 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// `I + sinθ[v̂×] + (1 − cosθ)[v̂×]²` with `v̂ = axis / |axis|`.
    pub fn rodrigues(theta: f64, axis: &Vec3) -> Result<Self, MathError> {
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(MathError::DegenerateAxis);
        }
        let k = skew(&(axis / n));
        Ok(Self(
            Matrix3::identity() + k * theta.sin() + (k * k) * (1.0 - theta.cos()),
        ))
    }

    /// Rotation by the vector `w` interpreted as axis·angle. Zero maps to identity.
    pub fn from_rotation_vector(w: &Vec3) -> Self {
        let angle = w.norm();
        if angle < 1e-300 {
            return Self::identity();
        }
        Self::rodrigues(angle, w).expect("nonzero axis")
    }

    pub fn about_x(theta: f64) -> Self {
        Self::rodrigues(theta, &Vec3::x()).expect("unit axis")
    }

    pub fn about_y(theta: f64) -> Self {
        Self::rodrigues(theta, &Vec3::y()).expect("unit axis")
    }

    pub fn about_z(theta: f64) -> Self {
        Self::rodrigues(theta, &Vec3::z()).expect("unit axis")
    }

    /// Fixed-axis roll/pitch/yaw: `Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::about_z(yaw) * Self::about_y(pitch) * Self::about_x(roll)
    }

    /// Wraps a matrix, rejecting anything further than `1e-6` from SO(3).
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, MathError> {
        let err = orthonormality_error(&m);
        if err > 1e-6 || m.determinant() < 0.0 {
            return Err(MathError::NotARotation(err));
        }
        Ok(Self(m).renormalized())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Column `i` of the rotation, i.e. the image of the i-th basis vector.
    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn x_axis(&self) -> Vec3 {
        self.column(0)
    }

    pub fn y_axis(&self) -> Vec3 {
        self.column(1)
    }

    pub fn z_axis(&self) -> Vec3 {
        self.column(2)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation vector (axis·angle) with angle in `[0, π]`.
    pub fn log(&self) -> Vec3 {
        let m = &self.0;
        let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let angle = cos.acos();
        let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        if angle < 1e-7 {
            // first-order: R ≈ I + [w×]
            return vee * 0.5;
        }
        if std::f64::consts::PI - angle < 1e-6 {
            // Near π the antisymmetric part vanishes; recover the axis from the
            // symmetric part R = 2aaᵀ − I.
            let b = (m + Matrix3::identity()) * 0.5;
            let diag = Vec3::new(b[(0, 0)], b[(1, 1)], b[(2, 2)]);
            let i = diag.imax();
            let mut axis = b.column(i).into_owned() / diag[i].max(1e-300).sqrt();
            if axis.dot(&vee) < 0.0 {
                axis = -axis;
            }
            return axis.normalize() * angle;
        }
        vee * (angle / (2.0 * angle.sin()))
    }

    /// Geodesic angle between two rotations.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.transpose() * *other).log().norm()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    /// Gram-Schmidt re-orthonormalization when drift exceeds the tolerance.
    pub fn renormalized(self) -> Self {
        if orthonormality_error(&self.0) <= ORTHO_DRIFT_TOL {
            return self;
        }
        let x = self.0.column(0).normalize();
        let y = (self.0.column(1) - x * x.dot(&self.0.column(1))).normalize();
        let z = x.cross(&y);
        Self(Matrix3::from_columns(&[x, y, z]))
    }
}

fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0).renormalized()
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Rigid transform: `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -rt.apply(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// Largest of translation distance (m) and rotation angle (rad) to `other`.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            self.rotation.angle_to(&other.rotation),
        )
    }

    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        let (dp, dr) = self.distance(other);
        dp <= tol && dr <= tol
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// Serialized pose: translation in meters plus roll/pitch/yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        Pose::new(
            Rotation::from_rpy(r, p, y),
            Vec3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
        )
    }

    /// Inverse of [`PoseSpec::to_pose`] (yaw-pitch-roll extraction).
    pub fn from_pose(pose: &Pose) -> Self {
        let m = pose.rotation.matrix();
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let (roll, yaw) = if pitch.cos().abs() > 1e-9 {
            (m[(2, 1)].atan2(m[(2, 2)]), m[(1, 0)].atan2(m[(0, 0)]))
        } else {
            ((-m[(1, 2)]).atan2(m[(1, 1)]), 0.0)
        };
        let t = pose.translation;
        Self {
            xyz: [t.x, t.y, t.z],
            rpy_deg: [roll.to_degrees(), pitch.to_degrees(), yaw.to_degrees()],
        }
    }
}

impl From<PoseSpec> for Pose {
    fn from(s: PoseSpec) -> Self {
        s.to_pose()
    }
}

/// Unit vectors `(e1, e2)` completing `axis` to a right-handed frame `(e1, e2, axis)`.
///
/// For `axis = ẑ` this returns the first two columns of the identity.
pub fn plane_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let n = axis.normalize();
    let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (seed - n * n.dot(&seed)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

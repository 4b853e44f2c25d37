//! SE(3) rigid transforms backed by a 3×3 rotation matrix.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Orthonormality drift above which a composed rotation is re-orthonormalized.
pub const ORTHONORMAL_DRIFT_LIMIT: f64 = 1e-9;

/// A rigid transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// URDF `origin` semantics: fixed-axis roll about x, then pitch about y,
    /// then yaw about z, i.e. `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), rpy[2])
            * Rotation3::from_axis_angle(&Vector3::y_axis(), rpy[1])
            * Rotation3::from_axis_angle(&Vector3::x_axis(), rpy[0]);
        Self {
            rotation: *rot.matrix(),
            translation: Vector3::from(xyz),
        }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally), no translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let norm = axis.norm();
        if norm == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let unit = Unit::new_unchecked(axis / norm);
        Self {
            rotation: *Rotation3::from_axis_angle(&unit, angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Inverse of [`from_xyz_rpy`](Self::from_xyz_rpy)'s rotation part.
    ///
    /// At gimbal lock (`|pitch| = π/2`) roll is reported as zero.
    pub fn rpy(&self) -> [f64; 3] {
        let r = &self.rotation;
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        if (1.0 - r[(2, 0)].abs()) < 1e-12 {
            let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
            [0.0, pitch, yaw]
        } else {
            let roll = r[(2, 1)].atan2(r[(2, 2)]);
            let yaw = r[(1, 0)].atan2(r[(0, 0)]);
            [roll, pitch, yaw]
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_drift(&rotation) > ORTHONORMAL_DRIFT_LIMIT {
            rotation = gram_schmidt(&rotation);
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn drift(&self) -> f64 {
        orthonormality_drift(&self.rotation)
    }

    pub fn is_proper_rotation(&self, tol: f64) -> bool {
        self.drift() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

pub fn orthonormality_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Re-orthonormalizes the columns of `r` (x, then y, z from the cross product).
pub fn gram_schmidt(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y_raw = r.column(1) - x * x.dot(&r.column(1));
    let y = y_raw.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        let r = repr.rotation;
        Ok(RigidTransform {
            rotation: Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            translation: Vector3::from(repr.translation),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-3.2f64..3.2),
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_map(|(rpy, xyz)| RigidTransform::from_xyz_rpy(xyz, rpy))
    }

    #[test]
    fn identity_is_neutral() {
        let t = RigidTransform::from_xyz_rpy([0.1, -0.2, 0.3], [0.4, 0.5, 0.6]);
        let id = RigidTransform::identity();
        assert_eq!(id.compose(&t), t);
        assert_eq!(t.compose(&id), t);
    }

    #[test]
    fn rpy_is_fixed_axis_xyz() {
        // yaw π/2 maps x to y.
        let t = RigidTransform::from_xyz_rpy([0.0; 3], [0.0, 0.0, FRAC_PI_2]);
        let p = t.transform_point(&Vector3::x());
        assert!((p - Vector3::y()).norm() < 1e-15);
        // roll then yaw: z stays (roll about x sends y to z, yaw leaves z).
        let t = RigidTransform::from_xyz_rpy([0.0; 3], [FRAC_PI_2, 0.0, FRAC_PI_2]);
        let p = t.transform_point(&Vector3::y());
        assert!((p - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn rpy_extraction_handles_gimbal_lock() {
        let t = RigidTransform::from_xyz_rpy([0.0; 3], [0.0, FRAC_PI_2, 0.3]);
        let back = RigidTransform::from_xyz_rpy([0.0; 3], t.rpy());
        assert!((back.rotation - t.rotation).amax() < 1e-12);
    }

    #[test]
    fn long_compose_chain_stays_orthonormal() {
        let step = RigidTransform::from_xyz_rpy([0.01, 0.0, 0.0], [0.3, -0.7, 1.1]);
        let mut acc = RigidTransform::identity();
        for _ in 0..1_000_000 {
            acc = acc.compose(&step);
        }
        assert!(acc.drift() < 1e-9, "drift {}", acc.drift());
        assert!((acc.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn compose_matches_homogeneous_product(a in arb_transform(), b in arb_transform()) {
            let ab = a.compose(&b).to_homogeneous();
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            prop_assert!((ab - oracle).amax() < 1e-12);
        }

        #[test]
        fn inverse_cancels(t in arb_transform()) {
            let id = t.compose(&t.inverse());
            prop_assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
            prop_assert!(id.translation.amax() < 1e-12);
        }

        #[test]
        fn rpy_round_trips(t in arb_transform()) {
            let back = RigidTransform::from_xyz_rpy([0.0; 3], t.rpy());
            prop_assert!((back.rotation - t.rotation).amax() < 1e-12);
        }

        #[test]
        fn serde_round_trip(t in arb_transform()) {
            let json = serde_json::to_string(&t).unwrap();
            let back: RigidTransform = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}

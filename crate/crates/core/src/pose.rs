//! Rigid poses, planar root poses and the angle helpers shared by every layer.

use std::f64::consts::{PI, TAU};

use nalgebra::{Isometry3, Matrix4, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(TAU) - PI;
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

/// Shortest signed difference `to - from`, wrapped.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

/// Rotation about the world z axis.
pub fn yaw_rotation(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

/// A rigid transform: translation in meters plus a unit-quaternion orientation.
///
/// On the wire the orientation is a rotation vector (axis times angle, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose3 {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    /// Builds a pose from a position and a rotation vector.
    pub fn from_rotation_vector(position: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::from_scaled_axis(rotation))
    }

    /// Rotation vector of the orientation, angle in `[0, π]`.
    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.orientation.scaled_axis()
    }

    /// `self ∘ child`: expresses `child` (given in this pose's frame) in the parent frame.
    pub fn compose(&self, child: &Pose3) -> Pose3 {
        Pose3 {
            position: self.position + self.orientation * child.position,
            orientation: self.orientation * child.orientation,
        }
    }

    pub fn inverse(&self) -> Pose3 {
        let inv = self.orientation.inverse();
        Pose3 {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * point
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        self.to_isometry().to_homogeneous()
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Geodesic angle between the two orientations, radians in `[0, π]`.
    pub fn rotation_distance(&self, other: &Pose3) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct Pose3Wire {
    position: [f64; 3],
    rotation: [f64; 3],
}

impl Serialize for Pose3 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = self.rotation_vector();
        Pose3Wire {
            position: [self.position.x, self.position.y, self.position.z],
            rotation: [r.x, r.y, r.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose3 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let w = Pose3Wire::deserialize(deserializer)?;
        Ok(Pose3::from_rotation_vector(w.position.into(), w.rotation.into()))
    }
}

/// Floating-base target: world-frame position of the pelvis plus heading.
///
/// Pitch and roll of the base are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RootPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl RootPose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw }
    }

    /// Same pose with the yaw wrapped into `(-π, π]`.
    pub fn wrapped(self) -> Self {
        Self { yaw: wrap_angle(self.yaw), ..self }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn planar_distance(&self, other: &RootPose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn as_pose3(&self) -> Pose3 {
        Pose3::new(self.position(), yaw_rotation(self.yaw))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.yaw.is_finite()
    }
}

/// Expresses a root-frame end-effector pose in the world frame.
pub fn ee_to_world(root: &RootPose, ee_in_root: &Pose3) -> Pose3 {
    root.as_pose3().compose(ee_in_root)
}

/// Inverse of [`ee_to_world`].
pub fn world_to_ee(root: &RootPose, ee_in_world: &Pose3) -> Pose3 {
    root.as_pose3().inverse().compose(ee_in_world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose3 {
        let p = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let angle = rng.gen_range(0.0..3.0);
        Pose3::from_rotation_vector(p, axis.normalize() * angle)
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng);
        let left = Pose3::identity().compose(&p);
        let right = p.compose(&Pose3::identity());
        assert_eq!(left.position, p.position);
        assert_relative_eq!(left.orientation.coords, p.orientation.coords, epsilon = 1e-15);
        assert_relative_eq!(right.position, p.position, epsilon = 1e-15);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let e = p.compose(&p.inverse());
            assert!(e.position.norm() < 1e-12);
            assert!(e.orientation.angle() < 1e-12);
        }
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        // Oracle: explicit 4x4 matrices assembled element by element from the rotation matrix.
        fn homogeneous(p: &Pose3) -> Matrix4<f64> {
            let r = p.orientation.to_rotation_matrix();
            let mut m = Matrix4::identity();
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = r[(i, j)];
                }
                m[(i, 3)] = p.position[i];
            }
            m
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let expected = homogeneous(&a) * homogeneous(&b);
            let got = homogeneous(&a.compose(&b));
            assert_relative_eq!(got, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn ee_to_world_examples() {
        let root = RootPose::new(0.0, 0.0, 0.7, 0.0);
        let ee = Pose3::from_position(Vector3::new(0.3, 0.2, 0.1));
        let w = ee_to_world(&root, &ee);
        assert_relative_eq!(w.position, Vector3::new(0.3, 0.2, 0.8), epsilon = 1e-15);

        let root = RootPose::new(1.0, -1.0, 0.7, std::f64::consts::FRAC_PI_2);
        let ee = Pose3::from_position(Vector3::new(0.3, 0.0, 0.0));
        let w = ee_to_world(&root, &ee);
        assert_relative_eq!(w.position - root.position(), Vector3::new(0.0, 0.3, 0.0), epsilon = 1e-15);
        // orientation is pre-multiplied by the yaw rotation
        assert!(w.orientation.angle_to(&yaw_rotation(root.yaw)) < 1e-15);
    }

    #[test]
    fn ee_to_world_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let root = RootPose::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.4..0.8), rng.gen_range(-4.0..4.0));
            let ee = random_pose(&mut rng);
            let back = world_to_ee(&root, &ee_to_world(&root, &ee));
            assert_relative_eq!(back.position, ee.position, epsilon = 1e-12);
            assert!(back.orientation.angle_to(&ee.orientation) < 1e-12);
        }
    }

    #[test]
    fn wrap_angle_edges() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-0.5 - TAU), -0.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(a in -1e4f64..1e4) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w), w);
            prop_assert!((w - a).rem_euclid(TAU).min(TAU - (w - a).rem_euclid(TAU)) < 1e-9);
        }

        #[test]
        fn compose_is_associative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!((l.position - r.position).norm() < 1e-12);
            prop_assert!(l.orientation.angle_to(&r.orientation) < 1e-12);
        }

        #[test]
        fn rotation_vector_round_trip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, angle in 0.0f64..3.14) {
            let axis = Vector3::new(x, y, z);
            prop_assume!(axis.norm() > 1e-3);
            let rv = axis.normalize() * angle;
            let p = Pose3::from_rotation_vector(Vector3::zeros(), rv);
            prop_assert!((p.orientation.norm() - 1.0).abs() < 1e-9);
            let back = Pose3::from_rotation_vector(Vector3::zeros(), p.rotation_vector());
            prop_assert!(back.orientation.angle_to(&p.orientation) < 1e-9);
        }

        #[test]
        fn ee_to_world_translation_equivariant(dx in -5.0f64..5.0, dy in -5.0f64..5.0, dz in -0.2f64..0.2, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let root = RootPose::new(0.1, -0.3, 0.7, rng.gen_range(-3.0..3.0));
            let ee = random_pose(&mut rng);
            let moved = RootPose::new(root.x + dx, root.y + dy, root.z + dz, root.yaw);
            let delta = ee_to_world(&moved, &ee).position - ee_to_world(&root, &ee).position;
            prop_assert!((delta - Vector3::new(dx, dy, dz)).norm() < 1e-12);
        }
    }
}

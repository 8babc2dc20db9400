//! Scene predicates that decide whether a task succeeded.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::Side;
use crate::pose::angle_diff;
use crate::runtime::Observation;
use crate::skills::hand::{HandState, HandTable};
use crate::world::{BoxStatus, Furniture, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "goal", rename_all = "snake_case")]
pub enum Goal {
    /// Hands in `state`, each within 0.02 m of its root-frame target.
    Hands { state: HandState, left: [f64; 3], right: [f64; 3] },
    /// Root within `tolerance` meters and `yaw_tolerance` radians of `pose` (x, y, yaw).
    RootNear { pose: [f64; 3], tolerance: f64, yaw_tolerance: f64 },
    /// `object` resting on top of `surface`.
    Resting { object: String, surface: String },
    /// `object` resting with its centre inside the footprint of `furniture`
    /// shifted `shift` meters along the furniture's left axis.
    LeftOf { object: String, furniture: String, shift: f64 },
    All { goals: Vec<Goal> },
}

/// Corners `(min, max)` of the footprint of `f` moved `shift` meters along its left axis.
pub fn spatial_region(f: &Furniture, shift: f64) -> (Vector2<f64>, Vector2<f64>) {
    let d = f.left_axis() * shift;
    (f.min() + d, f.max() + d)
}

impl Goal {
    pub fn hands(state: HandState, table: &HandTable) -> Self {
        let p = |side| {
            let v = table.pose(&state, side, None).position;
            [v.x, v.y, v.z]
        };
        Goal::Hands { state, left: p(Side::Left), right: p(Side::Right) }
    }

    pub fn check(&self, scene: &Scene, obs: &Observation) -> bool {
        match self {
            Goal::Hands { state, left, right } => {
                let near = |a: [f64; 3], b: [f64; 3]| (Vector3::from(a) - Vector3::from(b)).norm() <= 0.02;
                obs.hand_state.as_deref() == Some(state.name()) && near(obs.ee_left, *left) && near(obs.ee_right, *right)
            }
            Goal::RootNear { pose, tolerance, yaw_tolerance } => {
                let r = obs.root;
                (r[0] - pose[0]).hypot(r[1] - pose[1]) <= *tolerance && angle_diff(pose[2], r[3]).abs() <= *yaw_tolerance
            }
            Goal::Resting { object, surface } => scene.object(object).is_some_and(|b| b.is_resting_on(surface)),
            Goal::LeftOf { object, furniture, shift } => {
                let (Some(b), Some(f)) = (scene.object(object), scene.furniture(furniture)) else {
                    return false;
                };
                let (lo, hi) = spatial_region(f, *shift);
                let p = b.planar();
                matches!(b.status, BoxStatus::Resting { .. }) && (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y)
            }
            Goal::All { goals } => goals.iter().all(|g| g.check(scene, obs)),
        }
    }

    /// Objects the goal is about.
    pub fn objects(&self) -> Vec<&str> {
        match self {
            Goal::Resting { object, .. } | Goal::LeftOf { object, .. } => vec![object.as_str()],
            Goal::All { goals } => goals.iter().flat_map(|g| g.objects()).collect(),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::FurnitureKind;

    #[test]
    fn region_is_translated_footprint() {
        // sofa facing +x: its left axis is +y
        let sofa = Furniture { kind: FurnitureKind::Sofa, center: [-2.0, 0.0], length: 1.6, depth: 0.6, height: 0.5, facing: 0.0 };
        let (lo, hi) = spatial_region(&sofa, 0.6);
        assert!((lo - Vector2::new(-2.3, -0.2)).norm() < 1e-12);
        assert!((hi - Vector2::new(-1.7, 1.4)).norm() < 1e-12);
    }
}

//! The 16-number end-effector/root command consumed by the low-level controller.
//!
//! Layout of the flat encoding:
//!
//! | index  | meaning                                   | frame |
//! |--------|-------------------------------------------|-------|
//! | 0..4   | root `x, y, z, yaw`                       | world |
//! | 4..7   | left end-effector position                | root  |
//! | 7..10  | left end-effector rotation vector         | root  |
//! | 10..13 | right end-effector position               | root  |
//! | 13..16 | right end-effector rotation vector        | root  |

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{ee_to_world, Pose3, RootPose};

pub const COMMAND_DIM: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum CommandError {
    #[error("expected {COMMAND_DIM} numbers, got {0}")]
    BadDimension(usize),
    #[error("command contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// An end-effector target kept in its wire form (position + rotation vector),
/// so that decoding and re-encoding a command is exact.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EeTarget {
    pub position: [f64; 3],
    pub rotation: [f64; 3],
}

impl EeTarget {
    pub fn from_pose(pose: &Pose3) -> Self {
        let r = pose.rotation_vector();
        Self {
            position: [pose.position.x, pose.position.y, pose.position.z],
            rotation: [r.x, r.y, r.z],
        }
    }

    pub fn pose(&self) -> Pose3 {
        Pose3::from_rotation_vector(self.position.into(), self.rotation.into())
    }

    pub fn position_vec(&self) -> Vector3<f64> {
        self.position.into()
    }

    /// Adds `delta` to the position, leaving the rotation untouched.
    pub fn translated(&self, delta: &Vector3<f64>) -> Self {
        let mut out = *self;
        for (i, p) in out.position.iter_mut().enumerate() {
            *p += delta[i];
        }
        out
    }
}

/// Root pose (world frame) plus both end-effector targets (root frame).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EeRootCommand {
    pub root: RootPose,
    pub ee_left: EeTarget,
    pub ee_right: EeTarget,
}

impl EeRootCommand {
    pub fn new(root: RootPose, left: &Pose3, right: &Pose3) -> Self {
        Self {
            root,
            ee_left: EeTarget::from_pose(left),
            ee_right: EeTarget::from_pose(right),
        }
    }

    pub fn to_array(&self) -> [f64; COMMAND_DIM] {
        let r = &self.root;
        let (l, rt) = (&self.ee_left, &self.ee_right);
        [
            r.x, r.y, r.z, r.yaw,
            l.position[0], l.position[1], l.position[2],
            l.rotation[0], l.rotation[1], l.rotation[2],
            rt.position[0], rt.position[1], rt.position[2],
            rt.rotation[0], rt.rotation[1], rt.rotation[2],
        ]
    }

    /// Decodes a flat command. Rejects wrong lengths and non-finite entries.
    pub fn from_slice(values: &[f64]) -> Result<Self, CommandError> {
        if values.len() != COMMAND_DIM {
            return Err(CommandError::BadDimension(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CommandError::NonFinite(i));
        }
        let v = values;
        Ok(Self {
            root: RootPose::new(v[0], v[1], v[2], v[3]),
            ee_left: EeTarget {
                position: [v[4], v[5], v[6]],
                rotation: [v[7], v[8], v[9]],
            },
            ee_right: EeTarget {
                position: [v[10], v[11], v[12]],
                rotation: [v[13], v[14], v[15]],
            },
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Same end-effector targets under a different root target.
    pub fn with_root(&self, root: RootPose) -> Self {
        Self { root, ..*self }
    }

    /// World-frame end-effector targets if the robot stood exactly at `root`.
    pub fn world_targets(&self, root: &RootPose) -> (Pose3, Pose3) {
        (
            ee_to_world(root, &self.ee_left.pose()),
            ee_to_world(root, &self.ee_right.pose()),
        )
    }
}

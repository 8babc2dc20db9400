//! Canonical hand states and their root-frame end-effector targets.

use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{EeRootCommand, EeTarget};
use crate::kinematics::Side;
use crate::pose::{Pose3, RootPose};

#[derive(Debug, Error, PartialEq)]
#[error("unknown hand state `{0}`")]
pub struct UnknownState(pub String);

/// Squeeze geometry for [`HandState::Grasp`], root frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspParams {
    /// Width of the object between the two contact faces, meters.
    pub width: f64,
    /// Height of the contact points above the pelvis, meters.
    pub height: f64,
    /// Forward distance of the contact points from the pelvis, meters.
    #[serde(default = "default_forward")]
    pub forward: f64,
}

fn default_forward() -> f64 {
    0.32
}

impl GraspParams {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, forward: default_forward() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HandState {
    Rest,
    Hold,
    Ready,
    Grasp(GraspParams),
}

impl HandState {
    /// Whether the robot may walk with its hands in this state. A grasp pose is
    /// only safe while it is actually holding something, which the skill layer
    /// checks separately.
    pub fn locomotion_safe(&self) -> bool {
        matches!(self, HandState::Rest | HandState::Hold)
    }

    pub fn name(&self) -> &'static str {
        match self {
            HandState::Rest => "REST",
            HandState::Hold => "HOLD",
            HandState::Ready => "READY",
            HandState::Grasp(_) => "GRASP",
        }
    }
}

impl fmt::Display for HandState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `REST`, `HOLD` or `READY` (any case). `GRASP` needs parameters and is
/// built with [`HandState::Grasp`] directly.
impl FromStr for HandState {
    type Err = UnknownState;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "REST" => Ok(HandState::Rest),
            "HOLD" => Ok(HandState::Hold),
            "READY" => Ok(HandState::Ready),
            _ => Err(UnknownState(s.to_string())),
        }
    }
}

/// Left-hand coordinates of each canonical state; the right hand mirrors `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandTable {
    pub rest: [f64; 3],
    pub hold: [f64; 3],
    pub ready: [f64; 3],
    /// Each hand sits this far inside the object face when squeezing.
    pub squeeze_margin: f64,
}

impl Default for HandTable {
    fn default() -> Self {
        Self {
            rest: [0.05, 0.28, -0.05],
            hold: [0.25, 0.12, 0.10],
            ready: [0.30, 0.20, 0.15],
            squeeze_margin: 0.01,
        }
    }
}

/// Hand pointing straight down, the pose at zero joint angles.
pub fn hand_down() -> UnitQuaternion<f64> {
    UnitQuaternion::identity()
}

/// Hand pointing forward along the pelvis `x` axis.
pub fn hand_forward() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -std::f64::consts::FRAC_PI_2)
}

fn mirrored(left: [f64; 3], side: Side) -> Vector3<f64> {
    Vector3::new(left[0], side.sign() * left[1], left[2])
}

impl HandTable {
    /// Root-frame target of one hand. `grip` overrides the lateral spacing of
    /// `HOLD` so a carried object stays squeezed.
    pub fn pose(&self, state: &HandState, side: Side, grip: Option<f64>) -> Pose3 {
        match state {
            HandState::Rest => Pose3::new(mirrored(self.rest, side), hand_down()),
            HandState::Hold => {
                let mut p = self.hold;
                if let Some(width) = grip {
                    p[1] = self.grip_half(width);
                }
                Pose3::new(mirrored(p, side), hand_forward())
            }
            HandState::Ready => Pose3::new(mirrored(self.ready, side), hand_forward()),
            HandState::Grasp(g) => {
                let p = [g.forward, self.grip_half(g.width), g.height];
                Pose3::new(mirrored(p, side), hand_forward())
            }
        }
    }

    /// Lateral offset of each hand when squeezing an object of `width`.
    pub fn grip_half(&self, width: f64) -> f64 {
        width / 2.0 - self.squeeze_margin
    }

    pub fn targets(&self, state: &HandState, grip: Option<f64>) -> (EeTarget, EeTarget) {
        (
            EeTarget::from_pose(&self.pose(state, Side::Left, grip)),
            EeTarget::from_pose(&self.pose(state, Side::Right, grip)),
        )
    }

    /// Command that keeps the root where it is and puts the hands in `state`.
    pub fn hold_posture(&self, root: &RootPose, state: &HandState, grip: Option<f64>) -> EeRootCommand {
        let (ee_left, ee_right) = self.targets(state, grip);
        EeRootCommand { root: *root, ee_left, ee_right }
    }

    pub fn hold_posture_named(&self, root: &RootPose, name: &str) -> Result<EeRootCommand, UnknownState> {
        let state: HandState = name.parse()?;
        Ok(self.hold_posture(root, &state, None))
    }
}

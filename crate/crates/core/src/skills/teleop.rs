//! Keyboard and delta teleoperation onto the held command.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::command::EeRootCommand;
use crate::kinematics::Side;
use crate::pose::RootPose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopMode {
    #[default]
    Independent,
    /// One delta drives both hands: `x` and `z` shared, `y` mirrored.
    Mirrored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Key {
    // root group
    Forward,
    Back,
    StrafeLeft,
    StrafeRight,
    TurnLeft,
    TurnRight,
    Raise,
    Lower,
    // hand group, root frame
    HandForward,
    HandBack,
    HandLeft,
    HandRight,
    HandUp,
    HandDown,
}

/// Increment applied per key per skill tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeySteps {
    pub hand: f64,
    pub root: f64,
    pub turn: f64,
    pub height: f64,
}

impl Default for KeySteps {
    fn default() -> Self {
        Self { hand: 0.01, root: 0.04, turn: 0.1, height: 0.01 }
    }
}

/// Root motion in the root frame: forward, left, yaw, up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RootDelta {
    #[serde(default)]
    pub forward: f64,
    #[serde(default)]
    pub strafe: f64,
    #[serde(default)]
    pub turn: f64,
    #[serde(default)]
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeleopInput {
    /// Hand deltas in the root frame. Mirrored mode reads only `left`.
    Delta {
        #[serde(default)]
        left: [f64; 3],
        #[serde(default)]
        right: [f64; 3],
        #[serde(default)]
        root: RootDelta,
    },
    /// Keys held during this tick. Hand keys move `hand` in independent mode.
    Keys {
        keys: Vec<Key>,
        #[serde(default = "default_side")]
        hand: Side,
    },
}

fn default_side() -> Side {
    Side::Left
}

impl TeleopInput {
    /// Converts held keys to the equivalent delta.
    pub fn to_delta(&self, steps: &KeySteps) -> ([f64; 3], [f64; 3], RootDelta) {
        match self {
            TeleopInput::Delta { left, right, root } => (*left, *right, *root),
            TeleopInput::Keys { keys, hand } => {
                let mut d = [0.0; 3];
                let mut root = RootDelta::default();
                for k in keys {
                    match k {
                        Key::Forward => root.forward += steps.root,
                        Key::Back => root.forward -= steps.root,
                        Key::StrafeLeft => root.strafe += steps.root,
                        Key::StrafeRight => root.strafe -= steps.root,
                        Key::TurnLeft => root.turn += steps.turn,
                        Key::TurnRight => root.turn -= steps.turn,
                        Key::Raise => root.height += steps.height,
                        Key::Lower => root.height -= steps.height,
                        Key::HandForward => d[0] += steps.hand,
                        Key::HandBack => d[0] -= steps.hand,
                        Key::HandLeft => d[1] += steps.hand,
                        Key::HandRight => d[1] -= steps.hand,
                        Key::HandUp => d[2] += steps.hand,
                        Key::HandDown => d[2] -= steps.hand,
                    }
                }
                match hand {
                    Side::Left => (d, [0.0; 3], root),
                    Side::Right => ([0.0; 3], d, root),
                }
            }
        }
    }
}

/// Applies one teleop input to the held command.
pub fn teleop_map(held: &EeRootCommand, input: &TeleopInput, mode: TeleopMode, steps: &KeySteps) -> EeRootCommand {
    let (left, right, root) = input.to_delta(steps);
    let (dl, dr) = match mode {
        TeleopMode::Independent => (Vector3::from(left), Vector3::from(right)),
        TeleopMode::Mirrored => {
            // keys always steer the pair, whichever hand is selected
            let d = if left == [0.0; 3] { Vector3::from(right) } else { Vector3::from(left) };
            (d, Vector3::new(d.x, -d.y, d.z))
        }
    };
    let r = &held.root;
    let (s, c) = r.yaw.sin_cos();
    let moved = RootPose::new(
        r.x + c * root.forward - s * root.strafe,
        r.y + s * root.forward + c * root.strafe,
        r.z + root.height,
        r.yaw + root.turn,
    )
    .wrapped();
    EeRootCommand { root: moved, ee_left: held.ee_left.translated(&dl), ee_right: held.ee_right.translated(&dr) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::skills::hand::HandState;

    fn held() -> EeRootCommand {
        Config::default().hands.hold_posture(&RootPose::new(0.0, 0.0, 0.7, 0.0), &HandState::Ready, None)
    }

    fn delta(d: [f64; 3]) -> TeleopInput {
        TeleopInput::Delta { left: d, right: [0.0; 3], root: RootDelta::default() }
    }

    #[test]
    fn mirrored_example() {
        let h = held();
        let out = teleop_map(&h, &delta([0.01, 0.02, 0.0]), TeleopMode::Mirrored, &KeySteps::default());
        let dl = out.ee_left.position_vec() - h.ee_left.position_vec();
        let dr = out.ee_right.position_vec() - h.ee_right.position_vec();
        assert!((dl - Vector3::new(0.01, 0.02, 0.0)).norm() < 1e-12);
        assert!((dr - Vector3::new(0.01, -0.02, 0.0)).norm() < 1e-12);
        assert_eq!(out.root, h.root);
    }

    #[test]
    fn zero_lateral_gives_identical_deltas() {
        let h = held();
        let out = teleop_map(&h, &delta([0.03, 0.0, -0.02]), TeleopMode::Mirrored, &KeySteps::default());
        let dl = out.ee_left.position_vec() - h.ee_left.position_vec();
        let dr = out.ee_right.position_vec() - h.ee_right.position_vec();
        assert_eq!(dl, dr);
    }

    #[test]
    fn alternating_lateral_returns() {
        let start = held();
        let mut c = start;
        for k in 0..100 {
            let dy = if k % 2 == 0 { 0.013 } else { -0.013 };
            c = teleop_map(&c, &delta([0.0, dy, 0.0]), TeleopMode::Mirrored, &KeySteps::default());
        }
        assert!((c.ee_left.position_vec() - start.ee_left.position_vec()).norm() < 1e-12);
        assert!((c.ee_right.position_vec() - start.ee_right.position_vec()).norm() < 1e-12);
    }

    #[test]
    fn independent_applies_as_given() {
        let h = held();
        let input = TeleopInput::Delta { left: [0.0, 0.01, 0.0], right: [0.02, 0.0, 0.0], root: RootDelta::default() };
        let out = teleop_map(&h, &input, TeleopMode::Independent, &KeySteps::default());
        assert!((out.ee_left.position_vec() - h.ee_left.position_vec() - Vector3::new(0.0, 0.01, 0.0)).norm() < 1e-12);
        assert!((out.ee_right.position_vec() - h.ee_right.position_vec() - Vector3::new(0.02, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn root_keys_move_in_root_frame() {
        let mut h = held();
        h.root.yaw = std::f64::consts::FRAC_PI_2;
        let keys = TeleopInput::Keys { keys: vec![Key::Forward, Key::Raise], hand: Side::Left };
        let out = teleop_map(&h, &keys, TeleopMode::Independent, &KeySteps::default());
        assert!(out.root.x.abs() < 1e-12);
        assert!((out.root.y - 0.04).abs() < 1e-12);
        assert!((out.root.z - 0.71).abs() < 1e-12);
        assert_eq!(out.ee_left, h.ee_left);
    }

    #[test]
    fn mirrored_right_arrow_spreads_hands() {
        let h = held();
        let keys = TeleopInput::Keys { keys: vec![Key::HandLeft], hand: Side::Right };
        let out = teleop_map(&h, &keys, TeleopMode::Mirrored, &KeySteps::default());
        assert!(out.ee_left.position[1] > h.ee_left.position[1]);
        assert!(out.ee_right.position[1] < h.ee_right.position[1]);
    }
}

use nalgebra::Vector3;

use crate::config::Config;
use crate::controller::{step, ControllerState};
use crate::impedance::{spring_contact_force, ExternalForce, Surface};
use crate::pose::RootPose;
use crate::skills::hand::HandState;

/// Presses the left hand into a wall for `seconds` and returns how far it ends
/// up inside.
///
/// The wall is a half-space whose face passes through the hand's settled READY
/// position, facing back toward the robot. The left target is commanded `depth`
/// meters behind the face; the wall pushes back with `cfg.contact_stiffness`
/// and the controller yields through `cfg.gains`.
pub fn wall_contact(cfg: &Config, depth: f64, seconds: f64) -> f64 {
    let root = RootPose::new(0.0, 0.0, cfg.nominal_root_height, 0.0);
    let mut state = ControllerState::settled(cfg, root, &HandState::Ready);
    let face = state.ee_poses(cfg).0.position;
    let wall = Surface::HalfSpace { point: face, normal: -Vector3::x() };
    let mut cmd = state.command;
    cmd.ee_left = cmd.ee_left.translated(&Vector3::new(depth, 0.0, 0.0));
    let mut forces = [ExternalForce::zero(), ExternalForce::zero()];
    for _ in 0..cfg.ticks_for(seconds) {
        state = step(&state, &cmd, &forces, cfg).expect("finite inputs");
        let left = state.ee_poses(cfg).0.position;
        forces[0] = spring_contact_force(&left, &wall, cfg.contact_stiffness);
    }
    state.ee_poses(cfg).0.position.x - face.x
}

//! The 50 Hz whole-body controller: saturated proportional root tracking,
//! compliant end-effector target shifting and one damped-least-squares step per
//! tick.

use std::sync::{Arc, Mutex};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::EeRootCommand;
use crate::config::Config;
use crate::impedance::{compliant_target, ExternalForce, LowPass3};
use crate::kinematics::{dls_ik_step, JointVector, KinematicsError};
use crate::pose::{angle_diff, Pose3, RootPose};
use crate::skills::hand::{HandState, HandTable, UnknownState};

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("non-finite command, force or state")]
    NonFiniteInput,
}

impl From<KinematicsError> for ControllerError {
    fn from(_: KinematicsError) -> Self {
        ControllerError::NonFiniteInput
    }
}

/// Everything the controller carries from one tick to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub q: JointVector,
    pub root: RootPose,
    /// Low-passed compliant offsets, left then right, world frame.
    pub compliance: [LowPass3; 2],
    /// The command being held until a new one arrives.
    pub command: EeRootCommand,
    pub tick: u64,
}

impl ControllerState {
    /// A robot standing at `root` with the arms at `q`, holding its current hand poses.
    pub fn new(cfg: &Config, root: RootPose, q: JointVector) -> Self {
        let ee = cfg.robot.forward_kinematics(&root, &q);
        let to_root = |p: &Pose3| crate::pose::world_to_ee(&root, p);
        let command = EeRootCommand::new(root, &to_root(&ee.0), &to_root(&ee.1));
        Self { q, root, compliance: [LowPass3::default(); 2], command, tick: 0 }
    }

    /// Standing at `root` with the hands settled in `hands` (solved by IK).
    pub fn settled(cfg: &Config, root: RootPose, hands: &HandState) -> Self {
        let cmd = cfg.hands.hold_posture(&root, hands, None);
        let targets = cmd.world_targets(&root);
        let options = crate::kinematics::SolveOptions { max_iterations: 400, ..Default::default() };
        let mut params = cfg.ik_params();
        params.max_joint_step = 0.2;
        let q = crate::kinematics::solve_ik(&cfg.robot, &root, &JointVector::home(), &targets, &params, &options)
            .map(|s| s.joints)
            .unwrap_or_else(|_| JointVector::home());
        Self { command: cmd, ..Self::new(cfg, root, q) }
    }

    /// World-frame end-effector poses.
    pub fn ee_poses(&self, cfg: &Config) -> (Pose3, Pose3) {
        cfg.robot.forward_kinematics(&self.root, &self.q)
    }

    /// End-effector poses in the root frame.
    pub fn ee_in_root(&self, cfg: &Config) -> (Pose3, Pose3) {
        let (l, r) = self.ee_poses(cfg);
        (crate::pose::world_to_ee(&self.root, &l), crate::pose::world_to_ee(&self.root, &r))
    }

    /// Current low-passed compliant offsets.
    pub fn offsets(&self) -> [Vector3<f64>; 2] {
        [self.compliance[0].state, self.compliance[1].state]
    }
}

/// The command that puts the hands in a canonical state without moving the root.
pub fn hold_posture(state: &ControllerState, hands: &HandTable, named: &str) -> Result<EeRootCommand, UnknownState> {
    hands.hold_posture_named(&state.command.root, named)
}

/// Saturated proportional step of the base toward `target`.
fn root_step(root: &RootPose, target: &RootPose, cfg: &Config) -> RootPose {
    let b = &cfg.base;
    let dt = cfg.timestep;
    let (dx, dy) = (target.x - root.x, target.y - root.y);
    let dist = dx.hypot(dy);
    let speed = (b.position_gain * dist).min(b.linear_speed);
    let planar = if dist > 0.0 { (speed * dt / dist).min(1.0) } else { 0.0 };
    let z_target = target.z.clamp(b.min_height, b.max_height);
    let dz = (b.position_gain * (z_target - root.z)).clamp(-b.vertical_speed, b.vertical_speed) * dt;
    let dz = if dz.abs() > (z_target - root.z).abs() { z_target - root.z } else { dz };
    let dyaw_err = angle_diff(target.yaw, root.yaw);
    let dyaw = (b.yaw_gain * dyaw_err).clamp(-b.yaw_rate, b.yaw_rate) * dt;
    let dyaw = if dyaw.abs() > dyaw_err.abs() { dyaw_err } else { dyaw };
    RootPose::new(root.x + planar * dx, root.y + planar * dy, (root.z + dz).clamp(b.min_height, b.max_height), root.yaw + dyaw)
        .wrapped()
}

/// Advances the controller by one timestep under `cmd` and the per-hand forces
/// measured at the end of the previous tick.
pub fn step(state: &ControllerState, cmd: &EeRootCommand, forces: &[ExternalForce; 2], cfg: &Config) -> Result<ControllerState, ControllerError> {
    if !cmd.is_finite() || !forces.iter().all(|f| f.force.iter().all(|v| v.is_finite())) {
        return Err(ControllerError::NonFiniteInput);
    }
    let root = root_step(&state.root, &cmd.root, cfg);
    let (mut left, mut right) = cmd.world_targets(&root);
    let mut compliance = state.compliance;
    for (k, target) in [&mut left, &mut right].into_iter().enumerate() {
        let shifted = compliant_target(&target.position, &forces[k], &cfg.gains);
        let offset = compliance[k].update(&shifted.offset, cfg.timestep, cfg.compliance_time_constant);
        target.position += offset;
    }
    let ik = dls_ik_step(&cfg.robot, &root, &state.q, &(left, right), &cfg.ik_params())?;
    let (_, q) = ik.apply(&root, &state.q);
    Ok(ControllerState { q, root, compliance, command: *cmd, tick: state.tick + 1 })
}

/// Latest-value slot between one command producer and the tick loop. Posting
/// replaces whatever has not been consumed yet.
#[derive(Debug, Clone, Default)]
pub struct Mailbox {
    slot: Arc<Mutex<Option<EeRootCommand>>>,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&self, cmd: EeRootCommand) {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(cmd);
    }

    pub fn take(&self) -> Option<EeRootCommand> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

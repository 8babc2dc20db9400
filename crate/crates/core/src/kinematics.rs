//! Forward kinematics, Jacobians and damped-least-squares steps for the
//! simplified humanoid: a kinematic floating base `(x, y, z, yaw)` carrying two
//! 7-DoF arms.
//!
//! Each arm is a shoulder (pitch, roll, yaw) → upper arm → elbow pitch →
//! forearm → spherical wrist (roll, pitch, yaw) → hand. At `q = 0` the arm
//! hangs straight down and the hand frame is aligned with the pelvis frame.

use nalgebra::{DMatrix, DVector, Matrix6xX, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{Pose3, RootPose};

pub const ARM_DOF: usize = 7;
pub const JOINT_COUNT: usize = 2 * ARM_DOF;
/// Columns of a single-arm Jacobian: root x, y, z, yaw, then the seven arm joints.
pub const ARM_JACOBIAN_COLS: usize = 4 + ARM_DOF;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("non-finite joint angles or targets")]
    NonFiniteInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    /// +1 for the left arm, -1 for the right arm.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

const JOINT_AXES: [Axis; ARM_DOF] = [Axis::Y, Axis::X, Axis::Z, Axis::Y, Axis::Z, Axis::Y, Axis::X];

/// Geometry and limits of the two arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotModel {
    /// Lateral distance of each shoulder from the pelvis, meters.
    pub shoulder_lateral: f64,
    /// Height of the shoulders above the pelvis, meters.
    pub shoulder_height: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Wrist centre to end-effector point.
    pub hand: f64,
    /// Symmetric joint position limit, radians.
    pub joint_limit: f64,
    /// Joint speed limit, rad/s.
    pub joint_velocity_limit: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            shoulder_lateral: 0.15,
            shoulder_height: 0.35,
            upper_arm: 0.22,
            forearm: 0.20,
            hand: 0.08,
            joint_limit: 2.6,
            joint_velocity_limit: 4.0,
        }
    }
}

/// Fourteen arm joint angles: left arm in `0..7`, right arm in `7..14`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; JOINT_COUNT]);

impl Default for JointVector {
    fn default() -> Self {
        Self([0.0; JOINT_COUNT])
    }
}

impl JointVector {
    pub fn arm(&self, side: Side) -> [f64; ARM_DOF] {
        let mut out = [0.0; ARM_DOF];
        out.copy_from_slice(&self.0[side.index() * ARM_DOF..(side.index() + 1) * ARM_DOF]);
        out
    }

    pub fn set_arm(&mut self, side: Side, values: &[f64; ARM_DOF]) {
        self.0[side.index() * ARM_DOF..(side.index() + 1) * ARM_DOF].copy_from_slice(values);
    }

    /// Arms hanging with the elbows slightly bent, away from the straight-arm singularity.
    pub fn home() -> Self {
        let mut q = Self::default();
        q.0[3] = -0.6;
        q.0[ARM_DOF + 3] = -0.6;
        q
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Per-joint world-frame data produced while walking a chain.
struct ChainFrames {
    origins: [Vector3<f64>; ARM_DOF],
    axes: [Vector3<f64>; ARM_DOF],
    ee: Pose3,
}

impl RobotModel {
    pub fn reach(&self) -> f64 {
        self.upper_arm + self.forearm + self.hand
    }

    /// Shoulder mount in the root frame.
    pub fn shoulder_mount(&self, side: Side) -> Vector3<f64> {
        Vector3::new(0.0, side.sign() * self.shoulder_lateral, self.shoulder_height)
    }

    pub fn shoulder_world(&self, root: &RootPose, side: Side) -> Vector3<f64> {
        root.as_pose3().transform_point(&self.shoulder_mount(side))
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.0.iter().all(|v| v.abs() <= self.joint_limit)
    }

    pub fn clamp_to_limits(&self, q: &mut JointVector) {
        for v in q.0.iter_mut() {
            *v = v.clamp(-self.joint_limit, self.joint_limit);
        }
    }

    fn chain(&self, root: &RootPose, q: &[f64; ARM_DOF], side: Side) -> ChainFrames {
        let mut frame = root.as_pose3().compose(&Pose3::from_position(self.shoulder_mount(side)));
        let mut origins = [Vector3::zeros(); ARM_DOF];
        let mut axes = [Vector3::zeros(); ARM_DOF];
        for (i, axis) in JOINT_AXES.iter().enumerate() {
            origins[i] = frame.position;
            axes[i] = frame.orientation * axis.unit();
            frame.orientation *= UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(axis.unit()), q[i]);
            match i {
                2 => frame = frame.compose(&Pose3::from_position(Vector3::new(0.0, 0.0, -self.upper_arm))),
                3 => frame = frame.compose(&Pose3::from_position(Vector3::new(0.0, 0.0, -self.forearm))),
                6 => frame = frame.compose(&Pose3::from_position(Vector3::new(0.0, 0.0, -self.hand))),
                _ => {}
            }
        }
        ChainFrames { origins, axes, ee: frame }
    }

    /// World pose of one end-effector.
    pub fn ee_pose(&self, root: &RootPose, q: &JointVector, side: Side) -> Pose3 {
        self.chain(root, &q.arm(side), side).ee
    }

    /// World poses of the left and right end-effectors.
    pub fn forward_kinematics(&self, root: &RootPose, q: &JointVector) -> (Pose3, Pose3) {
        (self.ee_pose(root, q, Side::Left), self.ee_pose(root, q, Side::Right))
    }

    /// World-frame geometric Jacobian of one end-effector, 6 × 11.
    ///
    /// Rows are linear velocity then angular velocity; columns are root
    /// `x, y, z, yaw` followed by the seven joints of that arm.
    pub fn jacobian(&self, root: &RootPose, q: &JointVector, side: Side) -> Matrix6xX<f64> {
        let frames = self.chain(root, &q.arm(side), side);
        let p_ee = frames.ee.position;
        let mut jac = Matrix6xX::zeros(ARM_JACOBIAN_COLS);
        for i in 0..3 {
            jac[(i, i)] = 1.0;
        }
        let z = Vector3::z();
        let lever = p_ee - root.position();
        jac.fixed_view_mut::<3, 1>(0, 3).copy_from(&z.cross(&lever));
        jac.fixed_view_mut::<3, 1>(3, 3).copy_from(&z);
        for j in 0..ARM_DOF {
            let a = frames.axes[j];
            jac.fixed_view_mut::<3, 1>(0, 4 + j).copy_from(&a.cross(&(p_ee - frames.origins[j])));
            jac.fixed_view_mut::<3, 1>(3, 4 + j).copy_from(&a);
        }
        jac
    }
}

/// Position error followed by the rotation vector of `R_target · R_currentᵀ`.
pub fn pose_error(target: &Pose3, current: &Pose3) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = (target.orientation * current.orientation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Tuning of one damped-least-squares step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkParams {
    pub damping: f64,
    pub position_weight: f64,
    pub orientation_weight: f64,
    /// Include the root `x, y, z, yaw` columns in the solve.
    pub root_assist: bool,
    /// Per-arm position error is clipped to this norm before solving, meters.
    pub max_position_error: f64,
    /// Per-arm orientation error is clipped to this norm before solving, radians.
    pub max_orientation_error: f64,
    /// Penalise joints near their limits (weighted least-norm).
    pub limit_weighting: bool,
    /// Largest joint change per step, radians. Usually velocity limit × timestep.
    pub max_joint_step: f64,
    /// Largest planar root change per step, meters (root assist only).
    pub max_root_step: f64,
    /// Largest yaw change per step, radians (root assist only).
    pub max_yaw_step: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.05,
            position_weight: 1.0,
            orientation_weight: 0.5,
            root_assist: false,
            max_position_error: 0.1,
            max_orientation_error: 0.5,
            limit_weighting: false,
            max_joint_step: 4.0 * 0.02,
            max_root_step: 0.8 * 0.02,
            max_yaw_step: 1.5 * 0.02,
        }
    }
}

/// Result of one IK step. `joints` already respects the joint limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkStep {
    pub root: [f64; 4],
    pub joints: [f64; JOINT_COUNT],
}

impl IkStep {
    pub fn apply(&self, root: &RootPose, q: &JointVector) -> (RootPose, JointVector) {
        let r = RootPose::new(
            root.x + self.root[0],
            root.y + self.root[1],
            root.z + self.root[2],
            root.yaw + self.root[3],
        );
        let mut out = *q;
        for (v, d) in out.0.iter_mut().zip(self.joints.iter()) {
            *v += d;
        }
        (r, out)
    }
}

/// `W⁻¹ Jᵀ (J W⁻¹ Jᵀ + λ² I)⁻¹ e` with frozen columns removed from `J`.
/// `inv_weight` holds the diagonal of `W⁻¹`.
fn damped_solve(jac: &DMatrix<f64>, e: &DVector<f64>, damping: f64, frozen: &[bool], inv_weight: &[f64]) -> Option<DVector<f64>> {
    let mut active = jac.clone();
    for (c, f) in frozen.iter().enumerate() {
        if *f {
            active.column_mut(c).fill(0.0);
        } else {
            active.column_mut(c).scale_mut(inv_weight[c].sqrt());
        }
    }
    let mut gram = &active * active.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += damping * damping;
    }
    let y = gram.cholesky()?.solve(e);
    let mut out = active.transpose() * y;
    for (c, v) in out.iter_mut().enumerate() {
        *v *= inv_weight[c].sqrt();
    }
    Some(out)
}

/// Weighted-least-norm joint weight `1 + |∂H/∂q|` for the limit-distance
/// criterion `H = (2L)² / (4 (L - q)(q + L))`.
fn limit_weight(q: f64, limit: f64) -> f64 {
    let upper = (limit - q).max(1e-6);
    let lower = (q + limit).max(1e-6);
    let range = 2.0 * limit;
    let grad = range * range * (2.0 * q) / (4.0 * upper * upper * lower * lower);
    1.0 + grad.abs()
}

fn clamp_norm(v: &mut Vector6<f64>, range: std::ops::Range<usize>, max: f64) {
    let n = v.rows(range.start, range.len()).norm();
    if n > max {
        v.rows_mut(range.start, range.len()).scale_mut(max / n);
    }
}

/// Weighted stacked 12-dim task error for both arms.
pub fn task_error(
    model: &RobotModel,
    root: &RootPose,
    q: &JointVector,
    targets: &(Pose3, Pose3),
    params: &IkParams,
) -> DVector<f64> {
    let (left, right) = model.forward_kinematics(root, q);
    let mut e = DVector::zeros(12);
    for (k, (t, c)) in [(&targets.0, &left), (&targets.1, &right)].into_iter().enumerate() {
        let mut err = pose_error(t, c);
        clamp_norm(&mut err, 0..3, params.max_position_error);
        clamp_norm(&mut err, 3..6, params.max_orientation_error);
        for i in 0..3 {
            e[6 * k + i] = params.position_weight * err[i];
            e[6 * k + 3 + i] = params.orientation_weight * err[3 + i];
        }
    }
    e
}

/// One damped-least-squares step `Δ = Jᵀ (J Jᵀ + λ² I)⁻¹ e` toward both targets.
///
/// The whole step is scaled down uniformly when any joint (or root) component
/// exceeds its per-step limit, then joints are clamped to their position limits.
pub fn dls_ik_step(
    model: &RobotModel,
    root: &RootPose,
    q: &JointVector,
    targets: &(Pose3, Pose3),
    params: &IkParams,
) -> Result<IkStep, KinematicsError> {
    if !q.is_finite() || !root.is_finite() || !targets.0.is_finite() || !targets.1.is_finite() {
        return Err(KinematicsError::NonFiniteInput);
    }
    let e = task_error(model, root, q, targets, params);
    let root_cols = if params.root_assist { 4 } else { 0 };
    let cols = root_cols + JOINT_COUNT;
    let mut jac = DMatrix::zeros(12, cols);
    for side in Side::BOTH {
        let j = model.jacobian(root, q, side);
        let r0 = 6 * side.index();
        for row in 0..6 {
            let w = if row < 3 { params.position_weight } else { params.orientation_weight };
            for c in 0..root_cols {
                jac[(r0 + row, c)] = w * j[(row, c)];
            }
            for c in 0..ARM_DOF {
                jac[(r0 + row, root_cols + side.index() * ARM_DOF + c)] = w * j[(row, 4 + c)];
            }
        }
    }
    // Joints sitting on a limit that the step would push further out are
    // frozen and the solve is repeated without them.
    let mut frozen = vec![false; cols];
    let mut inv_weight = vec![1.0; cols];
    if params.limit_weighting {
        for j in 0..JOINT_COUNT {
            inv_weight[root_cols + j] = 1.0 / limit_weight(q.0[j], model.joint_limit);
        }
    }
    let mut delta = damped_solve(&jac, &e, params.damping, &frozen, &inv_weight);
    for _ in 0..JOINT_COUNT {
        let Some(current) = delta.as_ref() else { break };
        let mut changed = false;
        for j in 0..JOINT_COUNT {
            let c = root_cols + j;
            if frozen[c] {
                continue;
            }
            let at_upper = q.0[j] >= model.joint_limit - 1e-9 && current[c] > 0.0;
            let at_lower = q.0[j] <= -model.joint_limit + 1e-9 && current[c] < 0.0;
            if at_upper || at_lower {
                frozen[c] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        delta = damped_solve(&jac, &e, params.damping, &frozen, &inv_weight);
    }
    let mut delta = delta.ok_or(KinematicsError::NonFiniteInput)?;

    let mut scale: f64 = 1.0;
    for c in 0..cols {
        let limit = match c {
            c if c >= root_cols => params.max_joint_step,
            3 => params.max_yaw_step,
            _ => params.max_root_step,
        };
        if delta[c].abs() > limit {
            scale = scale.min(limit / delta[c].abs());
        }
    }
    delta *= scale;

    let mut step = IkStep { root: [0.0; 4], joints: [0.0; JOINT_COUNT] };
    for c in 0..root_cols {
        step.root[c] = delta[c];
    }
    for j in 0..JOINT_COUNT {
        let next = (q.0[j] + delta[root_cols + j]).clamp(-model.joint_limit, model.joint_limit);
        step.joints[j] = next - q.0[j];
    }
    if step.joints.iter().chain(step.root.iter()).any(|v| !v.is_finite()) {
        return Err(KinematicsError::NonFiniteInput);
    }
    Ok(step)
}

/// Stopping and restart policy for [`solve_ik`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// An arm whose error has not dropped by `stall_ratio` over this many
    /// iterations is re-seeded at a random configuration.
    pub stall_window: usize,
    pub stall_ratio: f64,
    /// Random draws scored per re-seed; the closest one is kept.
    pub reseed_candidates: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            position_tolerance: 1e-3,
            orientation_tolerance: 1e-2,
            stall_window: 6,
            stall_ratio: 0.9,
            reseed_candidates: 256,
            seed: 0,
        }
    }
}

/// Outcome of [`solve_ik`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkSolution {
    pub joints: JointVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates [`dls_ik_step`] with a fixed root until both end-effectors are within
/// tolerance or the iteration budget runs out. An arm that stalls in a
/// limit-induced local minimum is re-seeded from a seeded random draw; every
/// re-seed still counts against the same budget.
pub fn solve_ik(
    model: &RobotModel,
    root: &RootPose,
    start: &JointVector,
    targets: &(Pose3, Pose3),
    params: &IkParams,
    options: &SolveOptions,
) -> Result<IkSolution, KinematicsError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
    let mut q = *start;
    let arm_error = |q: &JointVector, side: Side| {
        let c = model.ee_pose(root, q, side);
        let t = if side == Side::Left { &targets.0 } else { &targets.1 };
        ((t.position - c.position).norm(), t.rotation_distance(&c))
    };
    let mut best = [f64::INFINITY; 2];
    let mut since_best = [0usize; 2];
    for it in 0..options.max_iterations {
        let mut done = true;
        for side in Side::BOTH {
            let (pe, re) = arm_error(&q, side);
            let ok = pe <= options.position_tolerance && re <= options.orientation_tolerance;
            done &= ok;
            let score = pe + 0.1 * re;
            let k = side.index();
            if ok || score < best[k] * options.stall_ratio {
                best[k] = score;
                since_best[k] = 0;
            } else {
                since_best[k] += 1;
            }
            if !ok && since_best[k] >= options.stall_window {
                // keep the closest of a batch of random draws
                let mut best_seed = (f64::INFINITY, q.arm(side));
                for _ in 0..options.reseed_candidates.max(1) {
                    let mut seed = [0.0; ARM_DOF];
                    for v in seed.iter_mut() {
                        *v = rng.gen_range(-model.joint_limit..model.joint_limit);
                    }
                    let mut trial = q;
                    trial.set_arm(side, &seed);
                    let (pe, re) = arm_error(&trial, side);
                    if pe + 0.1 * re < best_seed.0 {
                        best_seed = (pe + 0.1 * re, seed);
                    }
                }
                q.set_arm(side, &best_seed.1);
                best[k] = f64::INFINITY;
                since_best[k] = 0;
            }
        }
        if done {
            return Ok(IkSolution { joints: q, iterations: it, converged: true });
        }
        let step = dls_ik_step(model, root, &q, targets, params)?;
        q = step.apply(root, &q).1;
    }
    let converged = Side::BOTH.iter().all(|s| {
        let (pe, re) = arm_error(&q, *s);
        pe <= options.position_tolerance && re <= options.orientation_tolerance
    });
    Ok(IkSolution { joints: q, iterations: options.max_iterations, converged })
}

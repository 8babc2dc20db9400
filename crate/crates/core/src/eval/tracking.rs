//! Seeded reference trajectories rolled out through the controller.

use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{error_samples, jerk_squares, ErrorStats};
use crate::command::{EeRootCommand, EeTarget};
use crate::config::Config;
use crate::controller::{step, ControllerState};
use crate::impedance::ExternalForce;
use crate::kinematics::{solve_ik, JointVector, Side, SolveOptions};
use crate::pose::{Pose3, RootPose};
use crate::skills::hand::{hand_forward, HandState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingOptions {
    pub n: usize,
    pub seed: u64,
    /// Apply random force pulses to the hands.
    pub forces: bool,
    /// Low-pass the compliant offset (the configured time constant); off sets it to zero.
    pub low_pass: bool,
    /// Recorded seconds per trajectory.
    pub duration: f64,
    /// Seconds holding the first reference before recording starts.
    pub warmup: f64,
    /// Scales every motion amplitude; zero gives hold references.
    pub amplitude: f64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self { n: 100, seed: 0, forces: false, low_pass: true, duration: 4.0, warmup: 1.0, amplitude: 1.0 }
    }
}

/// One smooth signal: a sum of two sinusoids.
#[derive(Debug, Clone, Copy)]
struct Wave {
    a: [f64; 2],
    f: [f64; 2],
    phase: [f64; 2],
}

impl Wave {
    fn draw(rng: &mut ChaCha8Rng, amplitude: f64, max_freq: f64) -> Self {
        let mut w = Wave { a: [0.0; 2], f: [0.0; 2], phase: [0.0; 2] };
        for k in 0..2 {
            w.a[k] = amplitude * rng.gen_range(0.2..=1.0) / 2.0;
            w.f[k] = rng.gen_range(0.1..=max_freq);
            w.phase[k] = rng.gen_range(0.0..TAU);
        }
        w
    }

    /// Value relative to `t = 0`, so every trajectory starts at its nominal pose.
    fn at(&self, t: f64) -> f64 {
        (0..2).map(|k| self.a[k] * ((TAU * self.f[k] * t + self.phase[k]).sin() - self.phase[k].sin())).sum()
    }
}

fn waves(rng: &mut ChaCha8Rng, n: usize, amplitude: f64, max_freq: f64) -> Vec<Wave> {
    (0..n).map(|_| Wave::draw(rng, amplitude, max_freq)).collect()
}

/// A reference command per tick: gentle root motion plus hand motion around
/// the READY posture. Waypoints are checked reachable by IK; unreachable draws
/// are replaced.
pub fn reference_trajectory(cfg: &Config, seed: u64, ticks: usize, amplitude: f64) -> Vec<EeRootCommand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = cfg.timestep;
    loop {
        // root: ±0.1 m, ±0.2 rad, ±0.04 m; hands: ±0.05 m, ±0.15 rad per axis, ≤ 0.4 Hz
        let root_w = waves(&mut rng, 4, amplitude, 0.3);
        let hand_w: Vec<Vec<Wave>> = (0..2).map(|_| waves(&mut rng, 6, amplitude, 0.4)).collect();
        let x0 = rng.gen_range(-1.0..=1.0);
        let y0 = rng.gen_range(-1.0..=1.0);
        let yaw0 = rng.gen_range(-3.0..=3.0);
        let refs: Vec<EeRootCommand> = (0..ticks)
            .map(|k| {
                let t = k as f64 * dt;
                let root = RootPose::new(
                    x0 + 0.2 * root_w[0].at(t),
                    y0 + 0.2 * root_w[1].at(t),
                    cfg.nominal_root_height + 0.08 * root_w[2].at(t),
                    yaw0 + 0.4 * root_w[3].at(t),
                )
                .wrapped();
                let hand = |side: Side| {
                    let w = &hand_w[side.index()];
                    let base = cfg.hands.pose(&HandState::Ready, side, None).position;
                    let p = base + Vector3::new(w[0].at(t), w[1].at(t), w[2].at(t)) * 0.1;
                    let rv = Vector3::new(w[3].at(t), w[4].at(t), w[5].at(t)) * 0.3;
                    EeTarget::from_pose(&Pose3::new(p, UnitQuaternion::from_scaled_axis(rv) * hand_forward()))
                };
                EeRootCommand { root, ee_left: hand(Side::Left), ee_right: hand(Side::Right) }
            })
            .collect();
        if reachable(cfg, &refs) {
            return refs;
        }
    }
}

fn reachable(cfg: &Config, refs: &[EeRootCommand]) -> bool {
    let checks = 5;
    let opts = SolveOptions { max_iterations: 200, ..Default::default() };
    let mut params = cfg.ik_params();
    params.max_joint_step = 0.2;
    (0..checks).all(|i| {
        let c = &refs[(refs.len() - 1) * i / (checks - 1).max(1)];
        solve_ik(&cfg.robot, &c.root, &JointVector::home(), &c.world_targets(&c.root), &params, &opts).is_ok_and(|s| s.converged)
    })
}

/// Square force pulses of 5–15 N in random directions, independently per hand.
pub fn force_pulses(seed: u64, ticks: usize, dt: f64) -> Vec<[ExternalForce; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f04c);
    let mut out = vec![[ExternalForce::zero(), ExternalForce::zero()]; ticks];
    for hand in 0..2 {
        let mut t = rng.gen_range(0.2..0.8);
        while t < ticks as f64 * dt {
            let len = rng.gen_range(0.15..0.4);
            let dir = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let f = dir.normalize() * rng.gen_range(5.0..15.0);
            let (a, b) = ((t / dt).round() as usize, ((t + len) / dt).round() as usize);
            for slot in out.iter_mut().take(b.min(ticks)).skip(a) {
                slot[hand] = ExternalForce::new(f);
            }
            t += len + rng.gen_range(0.4..1.0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Commanded hand poses in the root frame, per recorded tick.
    pub reference: Vec<(Pose3, Pose3)>,
    /// Achieved hand poses in the (actual) root frame.
    pub actual: Vec<(Pose3, Pose3)>,
    /// World hand positions, left and right, for jerk.
    pub world: [Vec<Vector3<f64>>; 2],
    pub limit_violations: usize,
}

/// Runs the controller through `refs` under `forces` after a warm-up on `refs[0]`.
pub fn rollout(cfg: &Config, refs: &[EeRootCommand], forces: &[[ExternalForce; 2]], warmup_ticks: usize) -> Rollout {
    let first = refs[0];
    let opts = SolveOptions { max_iterations: 400, ..Default::default() };
    let mut params = cfg.ik_params();
    params.max_joint_step = 0.2;
    let q = solve_ik(&cfg.robot, &first.root, &JointVector::home(), &first.world_targets(&first.root), &params, &opts)
        .map_or(JointVector::home(), |s| s.joints);
    let mut s = ControllerState { command: first, ..ControllerState::new(cfg, first.root, q) };
    let zero = [ExternalForce::zero(), ExternalForce::zero()];
    for _ in 0..warmup_ticks {
        s = step(&s, &first, &zero, cfg).expect("finite reference");
    }
    let mut out = Rollout { reference: Vec::new(), actual: Vec::new(), world: [Vec::new(), Vec::new()], limit_violations: 0 };
    for (k, cmd) in refs.iter().enumerate() {
        let f = forces.get(k).unwrap_or(&zero);
        s = step(&s, cmd, f, cfg).expect("finite reference");
        out.reference.push((cmd.ee_left.pose(), cmd.ee_right.pose()));
        out.actual.push(s.ee_in_root(cfg));
        let (l, r) = s.ee_poses(cfg);
        out.world[0].push(l.position);
        out.world[1].push(r.position);
        if !cfg.robot.within_limits(&s.q) {
            out.limit_violations += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub index: usize,
    pub seed: u64,
    pub eps_p: f64,
    pub eps_r: f64,
    pub rms_jerk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub options: TrackingOptions,
    /// Position RMSE over every tick, hand and trajectory, meters.
    pub eps_p: f64,
    pub eps_p_std: f64,
    /// Geodesic orientation RMSE, radians.
    pub eps_r: f64,
    pub eps_r_std: f64,
    /// m/s³.
    pub rms_jerk: f64,
    pub limit_violations: usize,
    pub trajectories: Vec<TrajectoryReport>,
}

impl TrackingReport {
    pub fn table(&self) -> String {
        format!(
            "| variant | eps_p (m) | eps_r (rad) | RMS(j) (m/s^3) |\n|---|---|---|---|\n| {}{} | {:.4} ({:.4}) | {:.4} ({:.4}) | {:.3e} |\n",
            if self.options.forces { "force pulses" } else { "no force" },
            if self.options.low_pass { ", low-pass" } else { ", no low-pass" },
            self.eps_p,
            self.eps_p_std,
            self.eps_r,
            self.eps_r_std,
            self.rms_jerk
        )
    }
}

/// Trajectory `i` of a suite seeded with `seed` uses seed `seed + i`.
pub fn run_tracking_suite(cfg: &Config, opts: &TrackingOptions) -> TrackingReport {
    let mut cfg = cfg.clone();
    if !opts.low_pass {
        cfg.compliance_time_constant = 0.0;
    }
    let dt = cfg.timestep;
    let ticks = (opts.duration / dt).round() as usize;
    let warmup = (opts.warmup / dt).round() as usize;
    let (mut all_p, mut all_r, mut all_j) = (Vec::new(), Vec::new(), Vec::new());
    let mut trajectories = Vec::with_capacity(opts.n);
    let mut violations = 0;
    for i in 0..opts.n {
        let seed = opts.seed + i as u64;
        let refs = reference_trajectory(&cfg, seed, ticks, opts.amplitude);
        let forces = if opts.forces { force_pulses(seed, ticks, dt) } else { Vec::new() };
        let r = rollout(&cfg, &refs, &forces, warmup);
        let (p, rot) = error_samples(&r.reference, &r.actual).expect("same length");
        let j = jerk_squares(&[&r.world[0], &r.world[1]], dt).expect("enough samples");
        trajectories.push(TrajectoryReport {
            index: i,
            seed,
            eps_p: ErrorStats::from_samples(&p).rmse,
            eps_r: ErrorStats::from_samples(&rot).rmse,
            rms_jerk: (j.iter().sum::<f64>() / j.len() as f64).sqrt(),
        });
        violations += r.limit_violations;
        all_p.extend(p);
        all_r.extend(rot);
        all_j.extend(j);
    }
    let p = ErrorStats::from_samples(&all_p);
    let r = ErrorStats::from_samples(&all_r);
    TrackingReport {
        options: opts.clone(),
        eps_p: p.rmse,
        eps_p_std: p.std,
        eps_r: r.rmse,
        eps_r_std: r.std,
        rms_jerk: if all_j.is_empty() { 0.0 } else { (all_j.iter().sum::<f64>() / all_j.len() as f64).sqrt() },
        limit_violations: violations,
        trajectories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_references_track_exactly() {
        let opts = TrackingOptions { n: 3, amplitude: 0.0, duration: 1.0, ..Default::default() };
        let r = run_tracking_suite(&Config::default(), &opts);
        assert!(r.eps_p <= 1e-6, "{}", r.eps_p);
    }

    #[test]
    fn references_are_deterministic_and_start_at_nominal() {
        let cfg = Config::default();
        let a = reference_trajectory(&cfg, 9, 50, 1.0);
        assert_eq!(a, reference_trajectory(&cfg, 9, 50, 1.0));
        assert!((a[0].root.z - cfg.nominal_root_height).abs() < 1e-12);
    }

    #[test]
    fn pulses_are_bounded() {
        let f = force_pulses(3, 200, 0.02);
        assert!(f.iter().flatten().all(|x| x.force.norm() <= 15.0));
        assert!(f.iter().flatten().any(|x| x.force.norm() >= 5.0));
    }
}

//! State machines behind the built-in skills.

use std::path::PathBuf;

use nalgebra::Vector2;
use serde::Deserialize;

use super::hand::{GraspParams, HandState};
use super::{Effect, EffectResult, FailReason, Skill, SkillCall, SkillContext, SkillStep};
use crate::command::{EeRootCommand, EeTarget, COMMAND_DIM};
use crate::locomotion::{plan, GridMap, PathTracker, PlanError};
use crate::pose::{angle_diff, ee_to_world, RootPose};
use crate::world::Furniture;

/// Builds the state machine for a validated call.
pub fn instantiate(call: &SkillCall) -> Box<dyn Skill> {
    match call.clone() {
        SkillCall::MoveTo { x, y, theta } => Box::new(MoveTo::new(RootPose::new(x, y, 0.0, theta))),
        SkillCall::SetHands { state } => Box::new(SetHands { state }),
        SkillCall::Grasp { object } => Box::new(Staged::new(Plan::Grasp { object })),
        SkillCall::Place { surface, offset } => Box::new(Staged::new(Plan::Place { surface, offset: offset.unwrap_or(0.0) })),
        SkillCall::EeGoto { left, right } => Box::new(EeGoto { left, right }),
        SkillCall::StubPlanner { file } => Box::new(StubPlanner { file: file.into(), trajectory: None }),
    }
}

/// Whether the root has reached `cmd.root` and both hands their targets.
fn settled(ctx: &SkillContext, cmd: &EeRootCommand, hand_tolerance: f64) -> bool {
    let root = &ctx.state.root;
    let root_ok = root.planar_distance(&cmd.root) <= 0.01
        && (root.z - cmd.root.z.clamp(ctx.cfg.base.min_height, ctx.cfg.base.max_height)).abs() <= 0.01
        && angle_diff(cmd.root.yaw, root.yaw).abs() <= 0.02;
    root_ok && hands_error(ctx, cmd) <= hand_tolerance
}

/// Largest position error of the two hands against the targets of `cmd`.
fn hands_error(ctx: &SkillContext, cmd: &EeRootCommand) -> f64 {
    let (l, r) = ctx.state.ee_poses(ctx.cfg);
    let tl = ee_to_world(&ctx.state.root, &cmd.ee_left.pose());
    let tr = ee_to_world(&ctx.state.root, &cmd.ee_right.pose());
    (l.position - tl.position).norm().max((r.position - tr.position).norm())
}

pub struct SetHands {
    state: HandState,
}

impl Skill for SetHands {
    fn update(&mut self, ctx: &SkillContext) -> SkillStep {
        let cmd = ctx.cfg.hands.hold_posture(&ctx.state.command.root, &self.state, ctx.grip());
        if hands_error(ctx, &cmd) <= 0.02 && ctx.elapsed > 0.0 {
            return SkillStep::Done(Ok(()));
        }
        if ctx.elapsed > 5.0 {
            return SkillStep::Done(Err(FailReason::Unreachable { detail: format!("hands did not reach {}", self.state) }));
        }
        SkillStep::run(cmd, Some(self.state))
    }
}

pub struct EeGoto {
    left: EeTarget,
    right: EeTarget,
}

impl Skill for EeGoto {
    fn update(&mut self, ctx: &SkillContext) -> SkillStep {
        let cmd = EeRootCommand { root: ctx.state.command.root, ee_left: self.left, ee_right: self.right };
        let (l, r) = ctx.state.ee_in_root(ctx.cfg);
        let rot_ok = l.rotation_distance(&self.left.pose()) <= 0.05 && r.rotation_distance(&self.right.pose()) <= 0.05;
        if ctx.elapsed > 0.0 && hands_error(ctx, &cmd) <= 0.01 && rot_ok {
            return SkillStep::Done(Ok(()));
        }
        if ctx.elapsed > 5.0 {
            return SkillStep::Done(Err(FailReason::Unreachable { detail: "hand targets not reached".into() }));
        }
        SkillStep::run(cmd, None)
    }
}

/// Nearest free cell centre within `radius` of `(x, y)`.
fn nearest_free(map: &GridMap, x: f64, y: f64, radius: f64) -> Option<(f64, f64)> {
    let n = (radius / map.resolution).ceil() as i64;
    let (ci, cj) = map.cell_of(x, y)?;
    let mut best: Option<(f64, (f64, f64))> = None;
    for dj in -n..=n {
        for di in -n..=n {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if i < 0 || j < 0 || i as usize >= map.width || j as usize >= map.height || !map.cell_free(i as usize, j as usize) {
                continue;
            }
            let c = map.cell_center(i as usize, j as usize);
            let d = (c.0 - x).hypot(c.1 - y);
            if d <= radius && best.is_none_or(|b| d < b.0) {
                best = Some((d, c));
            }
        }
    }
    best.map(|b| b.1)
}

pub struct MoveTo {
    goal: RootPose,
    tracker: Option<PathTracker>,
    arrived: Option<f64>,
}

impl MoveTo {
    pub fn new(goal: RootPose) -> Self {
        Self { goal: goal.wrapped(), tracker: None, arrived: None }
    }
}

impl Skill for MoveTo {
    fn update(&mut self, ctx: &SkillContext) -> SkillStep {
        let held = ctx.state.command;
        let root = ctx.state.root;
        if self.tracker.is_none() {
            let pc = &ctx.cfg.planner;
            let map = GridMap::from_scene(ctx.scene, pc.resolution, pc.robot_radius);
            let mut start = [root.x, root.y, root.yaw];
            if !map.is_free(root.x, root.y) {
                // a robot that ended a manipulation close to furniture first steps to free space
                match nearest_free(&map, root.x, root.y, 0.3) {
                    Some((x, y)) => start = [x, y, root.yaw],
                    None => return SkillStep::Done(Err(FailReason::StartBlocked)),
                }
            }
            match plan(&map, start, [self.goal.x, self.goal.y, self.goal.yaw], pc) {
                Ok(path) => self.tracker = Some(PathTracker::new(&path, pc.lookahead, (pc.goal_tolerance, pc.goal_yaw_tolerance))),
                Err(PlanError::StartBlocked) => return SkillStep::Done(Err(FailReason::StartBlocked)),
                Err(PlanError::NoPath) => return SkillStep::Done(Err(FailReason::NoPath)),
            }
        }
        let tracker = self.tracker.as_mut().expect("planned above");
        let (mut cmd, done) = tracker.track_command(&root, &held);
        if done || self.arrived.is_some() {
            let since = *self.arrived.get_or_insert(ctx.elapsed);
            cmd.root = RootPose { z: held.root.z, ..self.goal };
            let close = root.planar_distance(&cmd.root) <= 0.02 && angle_diff(cmd.root.yaw, root.yaw).abs() <= 0.03;
            if close || ctx.elapsed - since > 2.0 {
                return SkillStep::Done(Ok(()));
            }
        }
        SkillStep::run(cmd, ctx.hands)
    }
}

/// One leg of a compound skill.
#[derive(Debug, Clone)]
enum Stage {
    /// Hold `command` until settled (or `timeout` seconds pass), but at least `dwell` seconds.
    Move { command: EeRootCommand, hands: HandState, tolerance: f64, dwell: f64, timeout: f64 },
    Apply(Effect),
}

#[derive(Debug, Clone)]
enum Plan {
    Grasp { object: String },
    Place { surface: String, offset: f64 },
}

/// Heading of a robot facing the furniture's front.
fn facing_yaw(f: &Furniture) -> f64 {
    crate::pose::wrap_angle(f.facing + std::f64::consts::PI)
}

fn heading(yaw: f64) -> Vector2<f64> {
    Vector2::new(yaw.cos(), yaw.sin())
}

fn root_at(p: Vector2<f64>, z: f64, yaw: f64) -> RootPose {
    RootPose::new(p.x, p.y, z, yaw)
}

/// Farthest a grasp or place may start from its first waypoint, meters.
const MAX_APPROACH: f64 = 1.0;

/// Compound skill that runs a fixed list of stages computed at its first update.
pub struct Staged {
    plan: Plan,
    stages: Vec<Stage>,
    current: usize,
    stage_start: f64,
    /// The carried object, checked for drops after it is attached.
    holding: Option<String>,
}

impl Staged {
    fn new(plan: Plan) -> Self {
        Self { plan, stages: Vec::new(), current: 0, stage_start: 0.0, holding: None }
    }

    fn build(&self, ctx: &SkillContext) -> Result<Vec<Stage>, FailReason> {
        let cfg = ctx.cfg;
        let hands = &cfg.hands;
        // approach waypoint this far behind the squeeze stance
        let approach = 0.35;
        let nominal = cfg.nominal_root_height;
        let mv = |root: RootPose, state: HandState, grip: Option<f64>, dwell: f64, timeout: f64| Stage::Move {
            command: hands.hold_posture(&root, &state, grip),
            hands: state,
            tolerance: 0.01,
            dwell,
            timeout,
        };
        match &self.plan {
            Plan::Grasp { object } => {
                let b = ctx.scene.object(object).ok_or_else(|| FailReason::GraspFailed { detail: format!("no object `{object}`") })?;
                let support = match &b.status {
                    crate::world::BoxStatus::Resting { on } => ctx.scene.furniture(on.id()),
                    _ => None,
                };
                let Some(f) = support else {
                    return Err(FailReason::GraspFailed { detail: format!("`{object}` is not resting on furniture") });
                };
                let yaw = facing_yaw(f);
                let (_, depth) = f.local_coords(&b.planar());
                // hands reach in just far enough to keep the pelvis off the edge
                let forward = (depth + 0.06).clamp(0.32, 0.44);
                let z = (b.position.z - 0.2).clamp(cfg.base.min_height, cfg.base.max_height);
                let height = b.position.z - z;
                let open = HandState::Grasp(GraspParams { width: b.size + 2.0 * 0.08, height, forward });
                let squeeze = HandState::Grasp(GraspParams { width: b.size, height, forward });
                let at = b.planar() - heading(yaw) * forward;
                let pre = at - heading(yaw) * approach;
                Ok(vec![
                    mv(root_at(pre, z, yaw), open, None, 0.0, 8.0),
                    mv(root_at(at, z, yaw), open, None, 0.0, 5.0),
                    mv(root_at(at, z, yaw), squeeze, None, 0.3, 3.0),
                    Stage::Apply(Effect::Attach { object: object.clone() }),
                    mv(root_at(at, nominal, yaw), squeeze, Some(b.size), 0.0, 3.0),
                    mv(root_at(pre, nominal, yaw), squeeze, Some(b.size), 0.0, 5.0),
                    mv(root_at(pre, nominal, yaw), HandState::Hold, Some(b.size), 0.0, 3.0),
                ])
            }
            Plan::Place { surface, offset } => {
                let f = ctx.scene.furniture(surface).ok_or_else(|| FailReason::Unreachable { detail: format!("no surface `{surface}`") })?;
                let b = ctx.scene.carried_box().ok_or_else(|| FailReason::Unreachable { detail: "nothing carried".into() })?;
                let yaw = facing_yaw(f);
                let reach = (f.length / 2.0 - 0.15).max(0.0);
                let lateral = offset.clamp(-reach, reach);
                let depth = 0.2;
                let forward = depth + 0.12;
                let height = f.height + b.size / 2.0 + 0.05 - nominal;
                let carry = HandState::Grasp(GraspParams { width: b.size, height, forward });
                let open = HandState::Grasp(GraspParams { width: b.size + 2.0 * 0.08, height, forward });
                let at = f.surface_point(lateral, depth) - heading(yaw) * forward;
                let pre = at - heading(yaw) * approach;
                Ok(vec![
                    mv(root_at(pre, nominal, yaw), HandState::Hold, Some(b.size), 0.0, 8.0),
                    mv(root_at(pre, nominal, yaw), carry, None, 0.0, 3.0),
                    mv(root_at(at, nominal, yaw), carry, None, 0.3, 5.0),
                    Stage::Apply(Effect::Release { object: b.id.clone() }),
                    mv(root_at(at, nominal, yaw), open, None, 0.0, 3.0),
                    mv(root_at(pre, nominal, yaw), open, None, 0.0, 5.0),
                    mv(root_at(pre, nominal, yaw), HandState::Hold, None, 0.0, 3.0),
                ])
            }
        }
    }
}

impl Skill for Staged {
    fn update(&mut self, ctx: &SkillContext) -> SkillStep {
        if self.stages.is_empty() {
            match self.build(ctx) {
                Ok(stages) => self.stages = stages,
                Err(e) => return SkillStep::Done(Err(e)),
            }
            // the stages walk straight without planning, so start close by
            if let Some(Stage::Move { command, .. }) = self.stages.first() {
                let d = ctx.state.root.planar_distance(&command.root);
                if d > MAX_APPROACH {
                    let detail = format!("{d:.2} m from the approach pose; move_to the furniture first");
                    return SkillStep::Done(Err(FailReason::Unreachable { detail }));
                }
            }
            self.stage_start = ctx.elapsed;
            if let Plan::Place { .. } = self.plan {
                self.holding = ctx.scene.carried_box().map(|b| b.id.clone());
            }
        }
        if let Some(object) = &self.holding {
            if ctx.scene.carried_box().is_none_or(|b| &b.id != object) {
                let on = ctx.scene.object(object).map_or("floor".to_string(), |b| match &b.status {
                    crate::world::BoxStatus::Fallen { on } => on.id().to_string(),
                    _ => "floor".to_string(),
                });
                return SkillStep::Done(Err(FailReason::Dropped { object: object.clone(), on }));
            }
        }
        loop {
            let Some(stage) = self.stages.get(self.current).cloned() else {
                return SkillStep::Done(Ok(()));
            };
            match stage {
                Stage::Apply(effect) => match ctx.effect {
                    None => {
                        // ask the world now, read the answer at the next update
                        if let Effect::Release { .. } = effect {
                            self.holding = None;
                        }
                        let command = ctx.state.command;
                        return SkillStep::Run { command, hands: ctx.hands, effect: Some(effect) };
                    }
                    Some(result) => {
                        self.current += 1;
                        self.stage_start = ctx.elapsed;
                        match (result, &effect) {
                            (EffectResult::Attached, Effect::Attach { object }) => self.holding = Some(object.clone()),
                            (EffectResult::Placed { .. }, Effect::Release { .. }) => self.holding = None,
                            (EffectResult::Dropped { on }, Effect::Release { object }) => {
                                return SkillStep::Done(Err(FailReason::Dropped { object: object.clone(), on: on.clone() }));
                            }
                            (EffectResult::Failed { detail }, _) => {
                                return SkillStep::Done(Err(FailReason::GraspFailed { detail: detail.clone() }));
                            }
                            (other, _) => {
                                return SkillStep::Done(Err(FailReason::GraspFailed { detail: format!("unexpected {other:?}") }));
                            }
                        }
                        continue;
                    }
                },
                Stage::Move { command, hands, tolerance, dwell, timeout } => {
                    let t = ctx.elapsed - self.stage_start;
                    let done = (t >= dwell && settled(ctx, &command, tolerance)) || t > timeout;
                    if done && t > 0.0 {
                        self.current += 1;
                        self.stage_start = ctx.elapsed;
                        continue;
                    }
                    return SkillStep::run(command, Some(hands));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct TrajectoryPoint {
    t: f64,
    command: Vec<f64>,
}

/// Replays `[{"t": s, "command": [16 numbers]}, ...]` with zero-order hold.
pub struct StubPlanner {
    file: PathBuf,
    trajectory: Option<Vec<(f64, EeRootCommand)>>,
}

/// Reads and checks a trajectory file.
pub fn load_trajectory(text: &str) -> Result<Vec<(f64, EeRootCommand)>, String> {
    let points: Vec<TrajectoryPoint> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if points.is_empty() {
        return Err("empty trajectory".into());
    }
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.command.len() != COMMAND_DIM {
            return Err(format!("point {i}: expected {COMMAND_DIM} numbers, got {}", p.command.len()));
        }
        let cmd = EeRootCommand::from_slice(&p.command).map_err(|e| format!("point {i}: {e}"))?;
        if i > 0 && !(p.t >= out.last().map_or(0.0, |l: &(f64, EeRootCommand)| l.0)) {
            return Err(format!("point {i}: time goes backwards"));
        }
        out.push((p.t, cmd));
    }
    Ok(out)
}

impl Skill for StubPlanner {
    fn update(&mut self, ctx: &SkillContext) -> SkillStep {
        if self.trajectory.is_none() {
            let loaded = std::fs::read_to_string(&self.file).map_err(|e| e.to_string()).and_then(|t| load_trajectory(&t));
            match loaded {
                Ok(t) => self.trajectory = Some(t),
                Err(detail) => return SkillStep::Done(Err(FailReason::Trajectory { detail })),
            }
        }
        let traj = self.trajectory.as_ref().expect("loaded above");
        let last = traj.last().expect("non-empty").0;
        if ctx.elapsed > last + 0.5 {
            return SkillStep::Done(Ok(()));
        }
        let i = traj.partition_point(|(t, _)| *t <= ctx.elapsed).max(1) - 1;
        SkillStep::run(traj[i].1, None)
    }
}

use serde::{Deserialize, Serialize};

use super::planner::{arc_point, Direction, PlannedPath};
use crate::command::EeRootCommand;
use crate::pose::{angle_diff, RootPose};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stretch {
    /// Turn on the spot at `(x, y)` to `theta`.
    Turn { x: f64, y: f64, theta: f64 },
    /// Consecutive moves in one direction, densely sampled.
    Drive { start: usize, end: usize },
}

/// Carrot-following tracker: each call returns a root target `lookahead`
/// meters of arc further along the path than the robot's projection on it.
#[derive(Debug, Clone)]
pub struct PathTracker {
    goal: [f64; 3],
    /// Dense poses of every drive stretch, back to back.
    samples: Vec<[f64; 3]>,
    /// Cumulative arc length within each stretch, aligned with `samples`.
    arc: Vec<f64>,
    stretches: Vec<Stretch>,
    current: usize,
    progress: f64,
    pub lookahead: f64,
    pub tolerance: (f64, f64),
}

/// Output of one tracker update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub root: RootPose,
    pub done: bool,
}

const SAMPLE_STEP: f64 = 0.01;

impl PathTracker {
    pub fn new(path: &PlannedPath, lookahead: f64, tolerance: (f64, f64)) -> Self {
        let mut samples = Vec::new();
        let mut arc = Vec::new();
        let mut stretches = Vec::new();
        let wps = &path.waypoints;
        let mut k = 1;
        while k < wps.len() {
            let w = &wps[k];
            if w.direction == Direction::TurnInPlace {
                stretches.push(Stretch::Turn { x: w.x, y: w.y, theta: w.theta });
                k += 1;
                continue;
            }
            let start = samples.len();
            samples.push(wps[k - 1].pose());
            arc.push(0.0);
            let mut s0 = 0.0;
            while k < wps.len() && wps[k].direction == w.direction {
                let (a, b) = (&wps[k - 1], &wps[k]);
                let sign = if b.direction == Direction::Reverse { -1.0 } else { 1.0 };
                let len = if b.curvature.abs() < 1e-12 {
                    (b.x - a.x).hypot(b.y - a.y)
                } else {
                    (angle_diff(b.theta, a.theta) / b.curvature).abs()
                };
                let n = (len / SAMPLE_STEP).ceil().max(1.0) as usize;
                for i in 1..=n {
                    let s = len * i as f64 / n as f64;
                    samples.push(if i == n { b.pose() } else { arc_point(a.pose(), sign, b.curvature, s) });
                    arc.push(s0 + s);
                }
                s0 += len;
                k += 1;
            }
            stretches.push(Stretch::Drive { start, end: samples.len() });
        }
        Self { goal: path.goal, samples, arc, stretches, current: 0, progress: 0.0, lookahead, tolerance }
    }

    fn goal_pose(&self, z: f64) -> RootPose {
        RootPose::new(self.goal[0], self.goal[1], z, self.goal[2])
    }

    fn at_goal(&self, root: &RootPose) -> bool {
        (root.x - self.goal[0]).hypot(root.y - self.goal[1]) <= self.tolerance.0
            && angle_diff(self.goal[2], root.yaw).abs() <= self.tolerance.1
    }

    /// Point at arc length `s` of a drive stretch, by linear interpolation.
    fn point_at(&self, start: usize, end: usize, s: f64) -> [f64; 3] {
        let arc = &self.arc[start..end];
        let s = s.clamp(0.0, arc[arc.len() - 1]);
        let i = arc.partition_point(|&a| a < s).clamp(1, arc.len() - 1);
        let (a, b) = (self.samples[start + i - 1], self.samples[start + i]);
        let span = arc[i] - arc[i - 1];
        let t = if span > 0.0 { (s - arc[i - 1]) / span } else { 1.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * angle_diff(b[2], a[2])]
    }

    /// Arc length of the closest point to `(x, y)` on a stretch, searching
    /// forward from the current progress.
    fn project(&self, start: usize, end: usize, x: f64, y: f64) -> f64 {
        let mut best = (f64::INFINITY, self.progress);
        for i in start + 1..end {
            let (a, b) = (self.samples[i - 1], self.samples[i]);
            if self.arc[i] < self.progress - 1e-9 {
                continue;
            }
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (px, py) = (a[0] + t * dx, a[1] + t * dy);
            let d = (x - px).hypot(y - py);
            if d < best.0 - 1e-12 {
                best = (d, self.arc[i - 1] + t * (self.arc[i] - self.arc[i - 1]));
            }
        }
        best.1.max(self.progress)
    }

    /// Next root target for a robot at `root`. The height is carried over from `root`.
    pub fn track(&mut self, root: &RootPose) -> TrackOutput {
        let z = root.z;
        loop {
            let Some(stretch) = self.stretches.get(self.current).copied() else {
                return TrackOutput { root: self.goal_pose(z), done: self.at_goal(root) };
            };
            match stretch {
                Stretch::Turn { x, y, theta } => {
                    if angle_diff(theta, root.yaw).abs() < 0.05 {
                        self.current += 1;
                        continue;
                    }
                    return TrackOutput { root: RootPose::new(x, y, z, theta), done: false };
                }
                Stretch::Drive { start, end } => {
                    let total = self.arc[end - 1];
                    self.progress = self.project(start, end, root.x, root.y);
                    let last = self.samples[end - 1];
                    let near_end = (root.x - last[0]).hypot(root.y - last[1]) < 0.05;
                    if near_end && self.current + 1 < self.stretches.len() {
                        self.current += 1;
                        self.progress = 0.0;
                        continue;
                    }
                    if self.current + 1 == self.stretches.len() && self.at_goal(root) {
                        return TrackOutput { root: self.goal_pose(z), done: true };
                    }
                    let c = self.point_at(start, end, (self.progress + self.lookahead).min(total));
                    return TrackOutput { root: RootPose::new(c[0], c[1], z, c[2]).wrapped(), done: false };
                }
            }
        }
    }

    /// Root target merged into `held`, whose end-effector fields are copied unchanged.
    pub fn track_command(&mut self, root: &RootPose, held: &EeRootCommand) -> (EeRootCommand, bool) {
        let out = self.track(root);
        (EeRootCommand { root: RootPose { z: held.root.z, ..out.root }, ..*held }, out.done)
    }
}

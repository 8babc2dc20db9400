use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GridMap, PlannerConfig};
use crate::pose::{angle_diff, wrap_angle};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("start pose is in collision")]
    StartBlocked,
    #[error("no collision-free path to the goal")]
    NoPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
    TurnInPlace,
}

/// A pose on the path and the motion that led to it from the previous
/// waypoint. `curvature` is signed per meter of travel; it is zero for straight
/// moves and rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub direction: Direction,
    #[serde(default)]
    pub curvature: f64,
}

impl Waypoint {
    fn start(p: [f64; 3]) -> Self {
        Self { x: p[0], y: p[1], theta: p[2], direction: Direction::Forward, curvature: 0.0 }
    }

    pub fn pose(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<Waypoint>,
    pub goal: [f64; 3],
    pub cost: f64,
}

impl PlannedPath {
    /// Length of all translating segments, meters.
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| segment_length(&w[0], &w[1]))
            .sum()
    }

    /// Poses along the path no more than `step` apart, endpoints included.
    pub fn sample(&self, step: f64) -> Vec<[f64; 3]> {
        let mut out = vec![self.waypoints[0].pose()];
        for w in self.waypoints.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.direction == Direction::TurnInPlace {
                out.push(b.pose());
                continue;
            }
            let len = segment_length(a, b);
            let n = (len / step).ceil().max(1.0) as usize;
            let sign = if b.direction == Direction::Reverse { -1.0 } else { 1.0 };
            for k in 1..=n {
                let s = len * k as f64 / n as f64;
                out.push(arc_point(a.pose(), sign, b.curvature, s));
            }
        }
        out
    }
}

/// Arc length of the move from `a` to `b`.
fn segment_length(a: &Waypoint, b: &Waypoint) -> f64 {
    if b.direction == Direction::TurnInPlace {
        return 0.0;
    }
    if b.curvature.abs() < 1e-12 {
        return (b.x - a.x).hypot(b.y - a.y);
    }
    (angle_diff(b.theta, a.theta) / b.curvature).abs()
}

/// Pose after travelling `s` meters from `p` with heading sign `sign` and curvature `k`.
pub fn arc_point(p: [f64; 3], sign: f64, k: f64, s: f64) -> [f64; 3] {
    let [x, y, th] = p;
    if k.abs() < 1e-12 {
        return [x + sign * s * th.cos(), y + sign * s * th.sin(), th];
    }
    let th1 = th + sign * k * s;
    [x + (th1.sin() - th.sin()) / k, y - (th1.cos() - th.cos()) / k, wrap_angle(th1)]
}

#[derive(Debug, Clone, Copy)]
struct Motion {
    direction: Direction,
    curvature: f64,
    /// Meters for moves, radians for rotations.
    amount: f64,
}

struct Node {
    pose: [f64; 3],
    g: f64,
    parent: usize,
    motion: Option<Motion>,
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    order: usize,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Search<'a> {
    map: &'a GridMap,
    cfg: &'a PlannerConfig,
    goal: [f64; 3],
    /// Shortest 8-connected distance from each free cell to the goal cell.
    to_goal: Vec<f64>,
}

/// Dijkstra over free cells from `goal`; diagonal steps need both side cells free.
fn grid_distances(map: &GridMap, goal: (usize, usize)) -> Vec<f64> {
    let w = map.width;
    let mut dist = vec![f64::INFINITY; w * map.height];
    let mut open = BinaryHeap::new();
    dist[goal.1 * w + goal.0] = 0.0;
    open.push(Entry { f: 0.0, order: 0, node: goal.1 * w + goal.0 });
    let res = map.resolution;
    while let Some(Entry { f, node, .. }) = open.pop() {
        if f > dist[node] {
            continue;
        }
        let (i, j) = ((node % w) as isize, (node / w) as isize);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let free = |a: isize, b: isize| a >= 0 && b >= 0 && (a as usize) < w && (b as usize) < map.height && map.cell_free(a as usize, b as usize);
            let (a, b) = (i + di, j + dj);
            if !free(a, b) || (di != 0 && dj != 0 && !(free(i + di, j) && free(i, j + dj))) {
                continue;
            }
            let k = b as usize * w + a as usize;
            let d = f + res * if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            if d < dist[k] {
                dist[k] = d;
                open.push(Entry { f: d, order: 0, node: k });
            }
        }
    }
    dist
}

/// Worst ratio of an 8-connected grid distance to the straight-line distance.
const OCTILE_RATIO: f64 = 1.082_392_2;

impl Search<'_> {
    fn rotation_rate(&self) -> f64 {
        self.cfg.rotation_cost / self.cfg.rotation_step
    }

    fn key(&self, p: &[f64; 3]) -> Option<(usize, usize, usize)> {
        let (i, j) = self.map.cell_of(p[0], p[1])?;
        let bins = self.cfg.heading_bins;
        let b = ((wrap_angle(p[2]) + PI) / (2.0 * PI) * bins as f64).floor() as usize % bins;
        Some((i, j, b))
    }

    fn heuristic(&self, p: &[f64; 3]) -> f64 {
        let d = (self.goal[0] - p[0]).hypot(self.goal[1] - p[1]);
        let turn = angle_diff(self.goal[2], p[2]).abs();
        // grid distance shrunk to a lower bound on the free-space path length
        let around = self
            .map
            .cell_of(p[0], p[1])
            .map_or(0.0, |(i, j)| self.to_goal[j * self.map.width + i] / OCTILE_RATIO - 2.0 * self.map.resolution);
        let d = d.max(around);
        (d - self.cfg.goal_tolerance).max(0.0).max((turn - self.cfg.goal_yaw_tolerance).max(0.0) * self.rotation_rate())
    }

    fn at_goal(&self, p: &[f64; 3]) -> bool {
        (self.goal[0] - p[0]).hypot(self.goal[1] - p[1]) <= self.cfg.goal_tolerance
            && angle_diff(self.goal[2], p[2]).abs() <= self.cfg.goal_yaw_tolerance
    }

    /// Checks a move at `collision_step` spacing and returns its end pose.
    fn simulate(&self, p: &[f64; 3], m: &Motion) -> Option<[f64; 3]> {
        if m.direction == Direction::TurnInPlace {
            return Some([p[0], p[1], wrap_angle(p[2] + m.amount)]);
        }
        let sign = if m.direction == Direction::Reverse { -1.0 } else { 1.0 };
        let n = (m.amount / self.cfg.collision_step).ceil().max(1.0) as usize;
        let mut end = *p;
        for k in 1..=n {
            let next = arc_point(*p, sign, m.curvature, m.amount * k as f64 / n as f64);
            if !self.map.span_free((end[0], end[1]), (next[0], next[1])) {
                return None;
            }
            end = next;
        }
        Some(end)
    }

    fn cost(&self, m: &Motion) -> f64 {
        match m.direction {
            Direction::Forward => m.amount,
            Direction::Reverse => m.amount * self.cfg.reverse_cost,
            Direction::TurnInPlace => m.amount.abs() * self.rotation_rate(),
        }
    }

    fn primitives(&self) -> Vec<Motion> {
        let mut out = Vec::new();
        for direction in [Direction::Forward, Direction::Reverse] {
            for &curvature in &self.cfg.curvatures {
                out.push(Motion { direction, curvature, amount: self.cfg.step });
            }
        }
        for sign in [1.0, -1.0] {
            out.push(Motion { direction: Direction::TurnInPlace, curvature: 0.0, amount: sign * self.cfg.rotation_step });
        }
        out
    }

    /// Rotate to face the goal (or face away from it when reversing), drive
    /// straight, rotate to the goal heading.
    fn shot(&self, p: &[f64; 3], direction: Direction) -> Option<Vec<([f64; 3], Motion)>> {
        let (dx, dy) = (self.goal[0] - p[0], self.goal[1] - p[1]);
        let d = dx.hypot(dy);
        let mut out = Vec::new();
        let mut cur = *p;
        if d > 1e-9 {
            let heading = if direction == Direction::Reverse { (-dy).atan2(-dx) } else { dy.atan2(dx) };
            let turn = angle_diff(heading, cur[2]);
            if turn.abs() > 1e-12 {
                let m = Motion { direction: Direction::TurnInPlace, curvature: 0.0, amount: turn };
                cur = self.simulate(&cur, &m)?;
                out.push((cur, m));
            }
            let m = Motion { direction, curvature: 0.0, amount: d };
            let mut end = self.simulate(&cur, &m)?;
            end[0] = self.goal[0];
            end[1] = self.goal[1];
            cur = end;
            out.push((cur, m));
        }
        let turn = angle_diff(self.goal[2], cur[2]);
        if turn.abs() > 1e-12 {
            let m = Motion { direction: Direction::TurnInPlace, curvature: 0.0, amount: turn };
            cur = [cur[0], cur[1], self.goal[2]];
            out.push((cur, m));
        }
        Some(out)
    }
}

fn waypoint(p: [f64; 3], m: &Motion) -> Waypoint {
    Waypoint { x: p[0], y: p[1], theta: p[2], direction: m.direction, curvature: m.curvature }
}

/// Hybrid A* from `start` to `goal` (`x, y, θ`).
///
/// Nodes are keyed by grid cell and heading bin; successors come from forward
/// and reverse arcs plus in-place rotations, and a rotate-straight-rotate shot
/// to the goal is tried periodically. If the search gives up while the goal cell
/// is reachable on the 4-connected grid, the path is built from that grid route
/// instead, so the planner never reports `NoPath` for a reachable goal.
pub fn plan(map: &GridMap, start: [f64; 3], goal: [f64; 3], cfg: &PlannerConfig) -> Result<PlannedPath, PlanError> {
    let start = [start[0], start[1], wrap_angle(start[2])];
    let goal = [goal[0], goal[1], wrap_angle(goal[2])];
    let start_cell = map.cell_of(start[0], start[1]).filter(|c| map.cell_free(c.0, c.1)).ok_or(PlanError::StartBlocked)?;
    let at_goal = (goal[0] - start[0]).hypot(goal[1] - start[1]) <= cfg.goal_tolerance
        && angle_diff(goal[2], start[2]).abs() <= cfg.goal_yaw_tolerance;
    if at_goal {
        return Ok(PlannedPath { waypoints: vec![Waypoint::start(start)], goal, cost: 0.0 });
    }
    let goal_cell = map.cell_of(goal[0], goal[1]).ok_or(PlanError::NoPath)?;
    let route = map.bfs(start_cell, goal_cell).ok_or(PlanError::NoPath)?;
    let search = Search { map, cfg, goal, to_goal: grid_distances(map, goal_cell) };

    if let Some(path) = hybrid_astar(&search, start) {
        return Ok(path);
    }
    Ok(lattice_path(map, cfg, start, goal, &route))
}

fn hybrid_astar(search: &Search, start: [f64; 3]) -> Option<PlannedPath> {
    let primitives = search.primitives();
    let mut nodes = vec![Node { pose: start, g: 0.0, parent: 0, motion: None }];
    let mut best: HashMap<(usize, usize, usize), (f64, usize)> = HashMap::new();
    best.insert(search.key(&start)?, (0.0, 0));
    let mut open = BinaryHeap::new();
    open.push(Entry { f: search.heuristic(&start), order: 0, node: 0 });
    let mut closed = std::collections::HashSet::new();
    let mut order = 1;
    let mut expansions = 0;
    // cheapest straight shot found so far: (total cost, node, tail)
    let mut shot: Option<(f64, usize, Vec<([f64; 3], Motion)>)> = None;

    while let Some(Entry { node, f, .. }) = open.pop() {
        if let Some((cost, _, _)) = &shot {
            if *cost <= f * search.cfg.suboptimality {
                break;
            }
        }
        let pose = nodes[node].pose;
        let key = search.key(&pose)?;
        if best.get(&key).map(|b| b.1) != Some(node) || !closed.insert(key) {
            continue;
        }
        if search.at_goal(&pose) {
            return Some(build(search, &nodes, node, Vec::new()));
        }
        if expansions % search.cfg.shot_interval == 0 {
            for direction in [Direction::Forward, Direction::Reverse] {
                let Some(tail) = search.shot(&pose, direction) else { continue };
                let cost = nodes[node].g + tail.iter().map(|(_, m)| search.cost(m)).sum::<f64>();
                if shot.as_ref().is_none_or(|s| cost < s.0) {
                    shot = Some((cost, node, tail));
                }
            }
        }
        expansions += 1;
        if expansions > search.cfg.max_expansions {
            break;
        }
        for m in &primitives {
            let Some(next) = search.simulate(&pose, m) else { continue };
            let Some(k) = search.key(&next) else { continue };
            if closed.contains(&k) {
                continue;
            }
            let g = nodes[node].g + search.cost(m);
            if best.get(&k).is_some_and(|b| b.0 <= g) {
                continue;
            }
            nodes.push(Node { pose: next, g, parent: node, motion: Some(*m) });
            let id = nodes.len() - 1;
            best.insert(k, (g, id));
            open.push(Entry { f: g + search.heuristic(&next), order, node: id });
            order += 1;
        }
    }
    shot.map(|(_, node, tail)| build(search, &nodes, node, tail))
}

fn build(search: &Search, nodes: &[Node], last: usize, tail: Vec<([f64; 3], Motion)>) -> PlannedPath {
    let mut chain = Vec::new();
    let mut k = last;
    while let Some(m) = nodes[k].motion {
        chain.push(waypoint(nodes[k].pose, &m));
        k = nodes[k].parent;
    }
    chain.push(Waypoint::start(nodes[0].pose));
    chain.reverse();
    let mut cost = nodes[last].g;
    for (p, m) in tail {
        cost += search.cost(&m);
        chain.push(waypoint(p, &m));
    }
    PlannedPath { waypoints: chain, goal: search.goal, cost }
}

/// Straight moves between 4-connected cell centres, turning in place at corners.
fn lattice_path(map: &GridMap, cfg: &PlannerConfig, start: [f64; 3], goal: [f64; 3], route: &[(usize, usize)]) -> PlannedPath {
    let rate = cfg.rotation_cost / cfg.rotation_step;
    let mut points = vec![(start[0], start[1])];
    points.extend(route.iter().map(|&(i, j)| map.cell_center(i, j)));
    // the goal shares the last cell, so this final leg stays inside it
    points.push((goal[0], goal[1]));
    let mut waypoints = vec![Waypoint::start(start)];
    let mut cost = 0.0;
    let mut heading = start[2];
    let turn_to = |wps: &mut Vec<Waypoint>, x: f64, y: f64, to: f64, heading: &mut f64, cost: &mut f64| {
        let d = angle_diff(to, *heading);
        if d.abs() > 1e-12 {
            *cost += d.abs() * rate;
            *heading = wrap_angle(to);
            wps.push(Waypoint { x, y, theta: *heading, direction: Direction::TurnInPlace, curvature: 0.0 });
        }
    };
    let mut i = 0;
    while i + 1 < points.len() {
        let (x0, y0) = points[i];
        // merge collinear steps into one straight move
        let mut j = i + 1;
        let dir = (points[j].0 - x0, points[j].1 - y0);
        while j + 1 < points.len() && i > 0 {
            let next = (points[j + 1].0 - points[j].0, points[j + 1].1 - points[j].1);
            if (next.0 - dir.0).abs() > 1e-9 || (next.1 - dir.1).abs() > 1e-9 {
                break;
            }
            j += 1;
        }
        let (x1, y1) = points[j];
        let d = (x1 - x0).hypot(y1 - y0);
        if d > 1e-12 {
            turn_to(&mut waypoints, x0, y0, (y1 - y0).atan2(x1 - x0), &mut heading, &mut cost);
            cost += d;
            waypoints.push(Waypoint { x: x1, y: y1, theta: heading, direction: Direction::Forward, curvature: 0.0 });
        }
        i = j;
    }
    let (x, y) = *points.last().unwrap();
    turn_to(&mut waypoints, x, y, goal[2], &mut heading, &mut cost);
    PlannedPath { waypoints, goal, cost }
}

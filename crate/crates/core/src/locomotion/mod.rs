//! Grid-map hybrid A* planning and carrot-pose path tracking for the base.

mod grid;
mod planner;
mod tracker;

pub use grid::{GridMap, MapError};
pub use planner::{arc_point, plan, Direction, PlanError, PlannedPath, Waypoint};
pub use tracker::{PathTracker, TrackOutput};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Grid cell size, meters.
    pub resolution: f64,
    /// Robot footprint radius the obstacles are grown by, meters.
    pub robot_radius: f64,
    pub heading_bins: usize,
    /// Arc length of one motion primitive, meters.
    pub step: f64,
    /// Curvatures of the arc primitives, 1/m.
    pub curvatures: Vec<f64>,
    /// Cost multiplier on reverse motion.
    pub reverse_cost: f64,
    /// In-place rotation increment, radians.
    pub rotation_step: f64,
    /// Cost of one rotation increment.
    pub rotation_cost: f64,
    pub goal_tolerance: f64,
    pub goal_yaw_tolerance: f64,
    /// Spacing of collision checks along a primitive, meters.
    pub collision_step: f64,
    /// The straight shot to the goal is tried every this many expansions.
    pub shot_interval: usize,
    /// The cheapest shot found is accepted once its cost is within this factor
    /// of the lowest cost estimate left on the open list.
    pub suboptimality: f64,
    pub max_expansions: usize,
    /// Carrot distance ahead of the robot, meters.
    pub lookahead: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            robot_radius: 0.35,
            heading_bins: 36,
            step: 0.25,
            curvatures: vec![0.0, 1.0, -1.0, 2.0, -2.0],
            reverse_cost: 2.0,
            rotation_step: 10f64.to_radians(),
            rotation_cost: 0.05,
            goal_tolerance: 0.10,
            goal_yaw_tolerance: 0.15,
            collision_step: 0.01,
            shot_interval: 5,
            suboptimality: 1.25,
            max_expansions: 60_000,
            lookahead: 0.4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::EeRootCommand;
    use crate::pose::RootPose;
    use std::f64::consts::FRAC_PI_2;

    fn open_map(w: usize, h: usize) -> GridMap {
        GridMap::new(0.05, [0.0, 0.0], w, h, vec![false; w * h], 0.35)
    }

    fn assert_collision_free(map: &GridMap, path: &PlannedPath) {
        for p in path.sample(0.01) {
            assert!(map.is_free(p[0], p[1]), "{p:?}");
        }
    }

    #[test]
    fn goal_equals_start() {
        let map = open_map(40, 40);
        let p = plan(&map, [1.0, 1.0, 0.3], [1.0, 1.0, 0.3], &PlannerConfig::default()).unwrap();
        assert_eq!(p.waypoints.len(), 1);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn straight_ahead_on_empty_map() {
        let map = open_map(100, 40);
        let p = plan(&map, [0.5, 1.0, 0.0], [3.5, 1.0, 0.0], &PlannerConfig::default()).unwrap();
        assert!(p.length() <= 1.05 * 3.0, "{}", p.length());
        assert!(p.waypoints.iter().all(|w| w.direction == Direction::Forward));
        assert_collision_free(&map, &p);
        let end = p.waypoints.last().unwrap();
        assert!((end.x - 3.5).hypot(end.y - 1.0) <= 0.1);
    }

    #[test]
    fn start_blocked() {
        let mut occ = vec![false; 40 * 40];
        occ[20 * 40 + 20] = true;
        let map = GridMap::new(0.05, [0.0, 0.0], 40, 40, occ, 0.35);
        let err = plan(&map, [1.0, 1.0, 0.0], [0.6, 0.6, 0.0], &PlannerConfig::default());
        assert_eq!(err, Err(PlanError::StartBlocked));
    }

    #[test]
    fn enclosed_goal() {
        // a ring of obstacles around the goal
        let n = 80;
        let mut occ = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let d = ((i as f64 - 60.0).powi(2) + (j as f64 - 40.0).powi(2)).sqrt();
                occ[j * n + i] = (10.0..11.5).contains(&d);
            }
        }
        let map = GridMap::new(0.05, [0.0, 0.0], n, n, occ, 0.35);
        let err = plan(&map, [0.6, 2.0, 0.0], [3.0, 2.0, 0.0], &PlannerConfig::default());
        assert_eq!(err, Err(PlanError::NoPath));
    }

    #[test]
    fn tracker_carrot_on_straight_path() {
        let map = open_map(100, 40);
        let p = plan(&map, [0.5, 1.0, 0.0], [3.5, 1.0, 0.0], &PlannerConfig::default()).unwrap();
        let mut t = PathTracker::new(&p, 0.4, (0.1, 0.15));
        let out = t.track(&RootPose::new(1.0, 1.0, 0.7, 0.0));
        assert!((out.root.x - 1.4).abs() < 1e-9 && (out.root.y - 1.0).abs() < 1e-9);
        assert!(!out.done);
        let out = t.track(&RootPose::new(3.48, 1.01, 0.7, 0.05));
        assert!(out.done);
        assert_eq!((out.root.x, out.root.y, out.root.yaw), (3.5, 1.0, 0.0));
    }

    #[test]
    fn tracker_reverse_keeps_heading() {
        let path = PlannedPath {
            waypoints: vec![
                Waypoint { x: 2.0, y: 1.0, theta: 0.0, direction: Direction::Forward, curvature: 0.0 },
                Waypoint { x: 1.0, y: 1.0, theta: 0.0, direction: Direction::Reverse, curvature: 0.0 },
            ],
            goal: [1.0, 1.0, 0.0],
            cost: 2.0,
        };
        let mut t = PathTracker::new(&path, 0.4, (0.1, 0.15));
        let out = t.track(&RootPose::new(2.0, 1.0, 0.7, 0.0));
        assert!((out.root.x - 1.6).abs() < 1e-9);
        assert_eq!(out.root.yaw, 0.0);
    }

    #[test]
    fn track_command_keeps_hands() {
        let map = open_map(100, 40);
        let p = plan(&map, [0.5, 1.0, 0.0], [3.5, 1.0, FRAC_PI_2], &PlannerConfig::default()).unwrap();
        let mut t = PathTracker::new(&p, 0.4, (0.1, 0.15));
        let held = EeRootCommand::from_slice(&[0.5, 1.0, 0.7, 0.0, 0.3, 0.2, 0.1, 0.0, 0.1, 0.0, 0.3, -0.2, 0.1, 0.0, 0.1, 0.0]).unwrap();
        let mut root = held.root;
        for _ in 0..200 {
            let (cmd, _) = t.track_command(&root, &held);
            assert_eq!((cmd.ee_left, cmd.ee_right), (held.ee_left, held.ee_right));
            // crude stand-in for the base: step part way to the carrot
            root = RootPose::new(
                root.x + 0.2 * (cmd.root.x - root.x),
                root.y + 0.2 * (cmd.root.y - root.y),
                0.7,
                root.yaw + 0.2 * crate::pose::angle_diff(cmd.root.yaw, root.yaw),
            );
        }
        assert!((root.x - 3.5).abs() < 0.1 && (root.y - 1.0).abs() < 0.1, "{root:?}");
        assert!((root.yaw - FRAC_PI_2).abs() < 0.15);
    }
}

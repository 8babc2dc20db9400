//! Scene summary and the system prompt handed to the planner backend.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::skills::hand::HandTable;
use crate::skills::tool_schemas;
use crate::world::{BoxStatus, Scene};

/// Standoff of approach poses from a front edge, meters.
pub const APPROACH_STANDOFF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureInfo {
    pub id: String,
    pub center: [f64; 2],
    pub length: f64,
    pub depth: f64,
    pub height: f64,
    /// Yaw of the outward normal of the front edge.
    pub facing: f64,
    /// Root pose (x, y, yaw) 0.5 m in front of the front-edge centre, facing it.
    pub approach: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub id: String,
    pub size: f64,
    pub position: [f64; 3],
    pub on: Option<String>,
}

/// What the planner is told about the room up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub room_size: f64,
    pub furniture: Vec<FurnitureInfo>,
    pub objects: Vec<ObjectInfo>,
}

impl SceneSummary {
    pub fn from_scene(scene: &Scene) -> Self {
        let furniture = scene
            .furniture
            .iter()
            .map(|f| {
                let a = f.approach_pose(APPROACH_STANDOFF, 0.0, 0.0);
                FurnitureInfo {
                    id: f.id().to_string(),
                    center: f.center,
                    length: f.length,
                    depth: f.depth,
                    height: f.height,
                    facing: f.facing,
                    approach: [a.x, a.y, a.yaw],
                }
            })
            .collect();
        let objects = scene
            .boxes
            .iter()
            .map(|b| ObjectInfo {
                id: b.id.clone(),
                size: b.size,
                position: [b.position.x, b.position.y, b.position.z],
                on: match &b.status {
                    BoxStatus::Resting { on } | BoxStatus::Fallen { on } => Some(on.id().to_string()),
                    BoxStatus::Carried => None,
                },
            })
            .collect();
        Self { room_size: scene.half_size * 2.0, furniture, objects }
    }

    pub fn furniture(&self, id: &str) -> Option<&FurnitureInfo> {
        self.furniture.iter().find(|f| f.id == id)
    }
}

/// Deterministic system prompt: frame conventions, layout, hand states, the
/// recommended pick-and-place sequence and the tool schemas.
pub fn build_system_prompt(summary: &SceneSummary) -> String {
    let mut s = String::new();
    let hands = HandTable::default();
    s.push_str("You control a humanoid robot in a simulated room by calling skills, one at a time.\n");
    s.push_str("After each call you receive an observation of the robot and the objects. Reply without a tool call once the task is complete.\n\n");
    s.push_str("## Coordinate frames\n");
    let _ = writeln!(
        s,
        "World frame: x east, y north, z up, meters; the room is a {:.2} m square centred on the origin. Yaw is measured counter-clockwise from +x, radians.",
        summary.room_size
    );
    s.push_str("Root frame: attached to the pelvis; x forward, y left, z up. Hand positions in observations are in the root frame.\n");
    s.push_str("A piece of furniture has a front edge facing `facing`; its left is the front normal turned a quarter turn counter-clockwise.\n\n");

    s.push_str("## Furniture\n");
    if summary.furniture.is_empty() {
        s.push_str("(none)\n");
    }
    for f in &summary.furniture {
        let _ = writeln!(
            s,
            "- {}: centre ({:.2}, {:.2}), length {:.2}, depth {:.2}, top at {:.2} m, facing {:.2} rad; approach pose ({:.2}, {:.2}, {:.2})",
            f.id, f.center[0], f.center[1], f.length, f.depth, f.height, f.facing, f.approach[0], f.approach[1], f.approach[2]
        );
    }
    s.push_str("\n## Objects\n");
    if summary.objects.is_empty() {
        s.push_str("(none)\n");
    }
    for o in &summary.objects {
        let _ = writeln!(
            s,
            "- {}: {:.2} m cube at ({:.2}, {:.2}, {:.2}) on {}",
            o.id,
            o.size,
            o.position[0],
            o.position[1],
            o.position[2],
            o.on.as_deref().unwrap_or("nothing (carried)")
        );
    }
    s.push_str("\n## Hand states\n");
    s.push_str("| state | left hand (root frame) | locomotion allowed |\n|---|---|---|\n");
    let row = |name: &str, p: [f64; 3], safe: &str| format!("| {name} | ({:.2}, {:.2}, {:.2}) | {safe} |\n", p[0], p[1], p[2]);
    s.push_str(&row("REST", hands.rest, "yes"));
    s.push_str(&row("HOLD", hands.hold, "yes"));
    s.push_str(&row("READY", hands.ready, "no"));
    s.push_str("| GRASP(width, height) | (0.32, width/2 - 0.01, height) | only while carrying |\n");
    s.push_str("The right hand mirrors the left in y. move_to refuses to start unless the hands allow locomotion.\n\n");
    s.push_str("## Recommended pick-and-place sequence\n");
    s.push_str("1. move_to the approach pose of the furniture holding the object\n");
    s.push_str("2. set_hands READY\n3. grasp the object\n4. set_hands HOLD\n");
    s.push_str("5. move_to the approach pose of the destination\n6. place on the destination surface\n");
    s.push_str("To put an object to the left of a piece of furniture, place it on that furniture with a positive `offset` (towards its left end).\n\n");
    s.push_str("## Tools\n");
    s.push_str(&serde_json::to_string_pretty(&tool_schemas()).unwrap_or_default());
    s.push('\n');
    s
}

//! Wire protocol `v:1`: JSON text frames, one message per frame.
//!
//! Every server message carries `v`, a `type` tag and a `seq` that increases by
//! one per message sent by the server, shared by all clients. Client messages
//! carry a `type` tag; `v`, when present, must be 1.

use eeroot::command::{EeRootCommand, EeTarget};
use eeroot::pose::Pose3;
use eeroot::runtime::{Runtime, SkillOutcome};
use eeroot::skills::teleop::{TeleopInput, TeleopMode};
use eeroot::task::{TaskResult, ToolCall};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// How `cmd.ee_root` values are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EeRootMode {
    /// Replace the held command.
    #[default]
    Absolute,
    /// Add to the held command, component-wise.
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopSession {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ClientMessage {
    #[serde(rename = "cmd.ee_root")]
    EeRoot {
        values: Vec<f64>,
        #[serde(default)]
        mode: EeRootMode,
    },
    /// Opens or closes the teleop session, or applies one input within it.
    #[serde(rename = "cmd.teleop")]
    Teleop {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<TeleopSession>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<TeleopInput>,
        #[serde(default)]
        mode: TeleopMode,
    },
    #[serde(rename = "cmd.skill")]
    Skill {
        name: String,
        #[serde(default)]
        params: Value,
    },
    #[serde(rename = "cmd.instruction")]
    Instruction {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backend: Option<String>,
    },
    #[serde(rename = "cmd.abort")]
    Abort,
    /// Lockstep servers only: advance the simulation by `ticks`.
    #[serde(rename = "cmd.step")]
    Step { ticks: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadMessage,
    BadVersion,
    BadDimension,
    TeleopActive,
    NoTeleop,
    SkillActive,
    TaskActive,
    UnknownSkill,
    BadParams,
    SafetyViolation,
    UnknownBackend,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: String,
    pub position: [f64; 3],
    pub status: String,
}

/// Snapshot of the robot and the room after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub tick: u64,
    pub time: f64,
    /// x, y, z, yaw.
    pub root: [f64; 4],
    pub joints: Vec<f64>,
    /// World-frame hand poses, position plus rotation vector.
    pub ee_left: EeTarget,
    pub ee_right: EeTarget,
    pub hand_state: Option<String>,
    pub carrying: Option<String>,
    pub objects: Vec<ObjectState>,
    /// Contact force on each hand, N, world frame.
    pub forces: [[f64; 3]; 2],
    pub active_skill: Option<String>,
    /// Mode of the open teleop session.
    pub teleop: Option<TeleopMode>,
    /// The command the controller is holding.
    pub command: [f64; 16],
}

impl RobotState {
    pub fn capture(rt: &Runtime, teleop: Option<TeleopMode>) -> Self {
        let (l, r) = rt.ctrl.ee_poses(&rt.cfg);
        let obs = rt.observation();
        let f = rt.forces();
        let root = rt.ctrl.root;
        Self {
            tick: rt.tick_count(),
            time: rt.time(),
            root: [root.x, root.y, root.z, root.yaw],
            joints: rt.ctrl.q.0.to_vec(),
            ee_left: EeTarget::from_pose(&l),
            ee_right: EeTarget::from_pose(&r),
            hand_state: obs.hand_state,
            carrying: obs.carrying,
            objects: rt
                .scene
                .boxes
                .iter()
                .zip(obs.objects)
                .map(|(b, o)| ObjectState { id: o.id, position: b.position.into(), status: o.status })
                .collect(),
            forces: [f[0].force.into(), f[1].force.into()],
            active_skill: rt.active_skill().map(str::to_string),
            teleop,
            command: rt.ctrl.command.to_array(),
        }
    }

    pub fn ee_poses(&self) -> (Pose3, Pose3) {
        (self.ee_left.pose(), self.ee_right.pose())
    }

    pub fn held_command(&self) -> EeRootCommand {
        EeRootCommand::from_slice(&self.command).expect("16 finite numbers")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    #[serde(rename = "state")]
    State(RobotState),
    /// A skill ended; `source` is `client` for `cmd.skill` and `task` inside an instruction.
    #[serde(rename = "event.skill_done")]
    SkillDone { source: String, outcome: SkillOutcome },
    #[serde(rename = "event.task_done")]
    TaskDone { result: TaskResult },
    /// One decision of the task backend.
    #[serde(rename = "event.llm_trace")]
    LlmTrace {
        iteration: usize,
        reasoning: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        call: Option<ToolCall>,
        /// The error a rejected call produced.
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    #[serde(rename = "error")]
    Error { code: ErrorCode, message: String },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error { code, message: message.into() }
    }

    pub fn is_state(&self) -> bool {
        matches!(self, ServerMessage::State(_))
    }
}

/// A server message as it goes on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub message: ServerMessage,
}

impl Envelope {
    pub fn new(seq: u64, message: ServerMessage) -> Self {
        Self { v: PROTOCOL_VERSION, seq, message }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parses one client frame.
pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    let value: Value = serde_json::from_str(text).map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))?;
    match value.get("v") {
        None => {}
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION as u64) => {}
        Some(v) => return Err(ServerMessage::error(ErrorCode::BadVersion, format!("unsupported protocol version {v}"))),
    }
    let mut value = value;
    if let Some(map) = value.as_object_mut() {
        map.remove("v");
        map.remove("seq");
    }
    serde_json::from_value(value).map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))
}

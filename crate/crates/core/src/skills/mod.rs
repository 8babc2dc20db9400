//! Mid-level skills. Every skill, whatever it does inside, emits the same
//! [`EeRootCommand`](crate::command::EeRootCommand) stream to the controller.
//!
//! A skill is described by a [`SkillSpec`] (typed parameters and a safety
//! requirement), invoked through a validated [`SkillCall`], and executed as a
//! [`Skill`] state machine that is updated at the skill rate.

pub mod builtin;
pub mod hand;
pub mod teleop;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::command::{EeRootCommand, EeTarget};
use crate::config::Config;
use crate::controller::ControllerState;
use crate::world::{FurnitureKind, Scene};
use hand::{GraspParams, HandState};

#[derive(Debug, Clone, Error, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum SkillError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("invalid parameters: {0}")]
    ParamValidation(String),
    #[error("safety violation: {0}")]
    SafetyViolation(String),
    #[error("another skill is running")]
    Busy,
}

/// What a parameter holds. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamType {
    Number { unit: String, min: f64, max: f64 },
    Choice { values: Vec<String> },
    /// Id of a movable object in the scene.
    ObjectId,
    /// Id of a piece of furniture (or `floor`).
    SurfaceId,
    /// Root-frame pose: `position` (m) and `rotation` (rotation vector, rad).
    Pose,
    /// Path of a file readable by the server.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub ty: ParamType,
    pub required: bool,
    pub description: String,
}

/// Hand condition a skill needs before it may start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Safety {
    None,
    /// Hands in a locomotion-safe state, or squeezing an object that is carried.
    LocomotionSafe,
    /// Nothing carried.
    HandsFree,
    /// An object is carried.
    Carrying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub safety: Safety,
}

fn param(name: &str, ty: ParamType, required: bool, description: &str) -> ParamSpec {
    ParamSpec { name: name.into(), ty, required, description: description.into() }
}

fn number(unit: &str, min: f64, max: f64) -> ParamType {
    ParamType::Number { unit: unit.into(), min, max }
}

/// The built-in skills, in a fixed order.
pub fn registry() -> Vec<SkillSpec> {
    let pi = std::f64::consts::PI;
    vec![
        SkillSpec {
            name: "move_to".into(),
            description: "Walk to a world-frame root pose with a planned collision-free path. \
                          The hands keep their current targets. Needs REST or HOLD hands (or a carried object)."
                .into(),
            params: vec![
                param("x", number("m", -10.0, 10.0), true, "target x, world frame"),
                param("y", number("m", -10.0, 10.0), true, "target y, world frame"),
                param("theta", number("rad", -pi, pi), true, "target heading, world frame"),
            ],
            safety: Safety::LocomotionSafe,
        },
        SkillSpec {
            name: "set_hands".into(),
            description: "Move both hands to a canonical state. REST and HOLD permit walking; READY and GRASP do not.".into(),
            params: vec![
                param(
                    "state",
                    ParamType::Choice { values: ["REST", "HOLD", "READY", "GRASP"].map(String::from).to_vec() },
                    true,
                    "canonical hand state",
                ),
                param("width", number("m", 0.05, 0.6), false, "GRASP only: object width between the hands"),
                param("height", number("m", -0.3, 0.4), false, "GRASP only: hand height above the pelvis"),
            ],
            safety: Safety::None,
        },
        SkillSpec {
            name: "grasp".into(),
            description: "Pick up a box with both hands: align in front of it, squeeze its side faces, lift and \
                          step back into HOLD. Start from the approach pose of its furniture with READY hands."
                .into(),
            params: vec![param("object", ParamType::ObjectId, true, "id of the box to pick up")],
            safety: Safety::HandsFree,
        },
        SkillSpec {
            name: "place".into(),
            description: "Put the carried box on a furniture surface and step back. Start from the approach pose \
                          of that furniture."
                .into(),
            params: vec![
                param("surface", ParamType::SurfaceId, true, "id of the furniture to place on"),
                param(
                    "offset",
                    number("m", -1.0, 1.0),
                    false,
                    "position along the furniture's length, positive toward its left end; default 0 (centre)",
                ),
            ],
            safety: Safety::Carrying,
        },
        SkillSpec {
            name: "ee_goto".into(),
            description: "Send both hands to explicit root-frame poses; the root stays put.".into(),
            params: vec![
                param("left", ParamType::Pose, true, "left hand pose"),
                param("right", ParamType::Pose, true, "right hand pose"),
            ],
            safety: Safety::None,
        },
        SkillSpec {
            name: "stub_planner".into(),
            description: "Replay an externally generated trajectory of timestamped 16-number end-effector/root commands.".into(),
            params: vec![param("file", ParamType::File, true, "JSON array of {\"t\": seconds, \"command\": [16 numbers]}")],
            safety: Safety::None,
        },
    ]
}

pub fn spec(name: &str) -> Option<SkillSpec> {
    registry().into_iter().find(|s| s.name == name)
}

fn json_schema(ty: &ParamType, description: &str) -> Value {
    match ty {
        ParamType::Number { unit, min, max } => {
            json!({"type": "number", "minimum": min, "maximum": max, "description": format!("{description} ({unit})")})
        }
        ParamType::Choice { values } => json!({"type": "string", "enum": values, "description": description}),
        ParamType::ObjectId | ParamType::SurfaceId | ParamType::File => json!({"type": "string", "description": description}),
        ParamType::Pose => json!({
            "type": "object",
            "description": description,
            "properties": {
                "position": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                "rotation": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            },
            "required": ["position", "rotation"],
        }),
    }
}

impl SkillSpec {
    /// Function-calling tool description in the chat-completions `tools` shape.
    pub fn tool_schema(&self) -> Value {
        let mut props = Map::new();
        for p in &self.params {
            props.insert(p.name.clone(), json_schema(&p.ty, &p.description));
        }
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {"type": "object", "properties": props, "required": required, "additionalProperties": false},
            }
        })
    }
}

/// Tool schemas of every built-in skill.
pub fn tool_schemas() -> Value {
    Value::Array(registry().iter().map(SkillSpec::tool_schema).collect())
}

/// A validated skill invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "skill", rename_all = "snake_case")]
pub enum SkillCall {
    MoveTo { x: f64, y: f64, theta: f64 },
    SetHands { state: HandState },
    Grasp { object: String },
    Place { surface: String, offset: Option<f64> },
    EeGoto { left: EeTarget, right: EeTarget },
    StubPlanner { file: String },
}

fn bad(msg: impl Into<String>) -> SkillError {
    SkillError::ParamValidation(msg.into())
}

fn get_number(args: &Map<String, Value>, p: &ParamSpec) -> Result<Option<f64>, SkillError> {
    let Some(v) = args.get(&p.name) else { return Ok(None) };
    let x = v.as_f64().ok_or_else(|| bad(format!("`{}` must be a number", p.name)))?;
    if let ParamType::Number { min, max, unit } = &p.ty {
        if !(x >= *min && x <= *max) {
            return Err(bad(format!("`{}` = {x} outside [{min}, {max}] {unit}", p.name)));
        }
    }
    Ok(Some(x))
}

fn get_pose(args: &Map<String, Value>, name: &str) -> Result<EeTarget, SkillError> {
    let v = args.get(name).ok_or_else(|| bad(format!("missing `{name}`")))?;
    let t: EeTarget = serde_json::from_value(v.clone()).map_err(|e| bad(format!("`{name}`: {e}")))?;
    if !t.position.iter().chain(t.rotation.iter()).all(|v| v.is_finite()) {
        return Err(bad(format!("`{name}` is not finite")));
    }
    Ok(t)
}

impl SkillCall {
    pub fn name(&self) -> &'static str {
        match self {
            SkillCall::MoveTo { .. } => "move_to",
            SkillCall::SetHands { .. } => "set_hands",
            SkillCall::Grasp { .. } => "grasp",
            SkillCall::Place { .. } => "place",
            SkillCall::EeGoto { .. } => "ee_goto",
            SkillCall::StubPlanner { .. } => "stub_planner",
        }
    }

    /// Checks `args` against the skill's schema. With a scene, object and
    /// surface ids must also exist in it.
    pub fn parse(name: &str, args: &Value, scene: Option<&Scene>) -> Result<SkillCall, SkillError> {
        let spec = spec(name).ok_or_else(|| SkillError::UnknownSkill(name.to_string()))?;
        let empty = Map::new();
        let args = match args {
            Value::Object(m) => m,
            Value::Null => &empty,
            _ => return Err(bad("arguments must be a JSON object")),
        };
        for key in args.keys() {
            if !spec.params.iter().any(|p| &p.name == key) {
                return Err(bad(format!("unexpected parameter `{key}`")));
            }
        }
        for p in &spec.params {
            if p.required && !args.contains_key(&p.name) {
                return Err(bad(format!("missing `{}`", p.name)));
            }
        }
        let p = |n: &str| spec.params.iter().find(|p| p.name == n).expect("declared parameter");
        let text = |n: &str| -> Result<String, SkillError> {
            args.get(n).and_then(Value::as_str).map(str::to_string).ok_or_else(|| bad(format!("`{n}` must be a string")))
        };
        let call = match name {
            "move_to" => SkillCall::MoveTo {
                x: get_number(args, p("x"))?.unwrap_or_default(),
                y: get_number(args, p("y"))?.unwrap_or_default(),
                theta: get_number(args, p("theta"))?.unwrap_or_default(),
            },
            "set_hands" => {
                let s = text("state")?;
                let ParamType::Choice { values } = &p("state").ty else { unreachable!() };
                if !values.iter().any(|v| v.eq_ignore_ascii_case(&s)) {
                    return Err(bad(format!("`state` must be one of {values:?}")));
                }
                let width = get_number(args, p("width"))?;
                let height = get_number(args, p("height"))?;
                let state = if s.eq_ignore_ascii_case("GRASP") {
                    let width = width.ok_or_else(|| bad("GRASP needs `width`"))?;
                    HandState::Grasp(GraspParams::new(width, height.unwrap_or(0.2)))
                } else {
                    if width.is_some() || height.is_some() {
                        return Err(bad("`width` and `height` only apply to GRASP"));
                    }
                    s.parse().map_err(|e: hand::UnknownState| bad(e.to_string()))?
                };
                SkillCall::SetHands { state }
            }
            "grasp" => {
                let object = text("object")?;
                if let Some(scene) = scene {
                    if scene.object(&object).is_none() {
                        return Err(bad(format!("no object `{object}` in the scene")));
                    }
                }
                SkillCall::Grasp { object }
            }
            "place" => {
                let surface = text("surface")?;
                if FurnitureKind::from_id(&surface).is_none() {
                    return Err(bad(format!("`{surface}` is not a furniture id")));
                }
                if let Some(scene) = scene {
                    if scene.furniture(&surface).is_none() {
                        return Err(bad(format!("no furniture `{surface}` in the scene")));
                    }
                }
                SkillCall::Place { surface, offset: get_number(args, p("offset"))? }
            }
            "ee_goto" => SkillCall::EeGoto { left: get_pose(args, "left")?, right: get_pose(args, "right")? },
            "stub_planner" => SkillCall::StubPlanner { file: text("file")? },
            other => return Err(SkillError::UnknownSkill(other.to_string())),
        };
        Ok(call)
    }

    /// Arguments as they would appear in a tool call; `parse` of this is the identity.
    pub fn arguments(&self) -> Value {
        match self {
            SkillCall::MoveTo { x, y, theta } => json!({"x": x, "y": y, "theta": theta}),
            SkillCall::SetHands { state: HandState::Grasp(g) } => json!({"state": "GRASP", "width": g.width, "height": g.height}),
            SkillCall::SetHands { state } => json!({"state": state.name()}),
            SkillCall::Grasp { object } => json!({"object": object}),
            SkillCall::Place { surface, offset: Some(o) } => json!({"surface": surface, "offset": o}),
            SkillCall::Place { surface, offset: None } => json!({"surface": surface}),
            SkillCall::EeGoto { left, right } => json!({"left": left, "right": right}),
            SkillCall::StubPlanner { file } => json!({"file": file}),
        }
    }

    pub fn safety(&self) -> Safety {
        spec(self.name()).map_or(Safety::None, |s| s.safety)
    }
}

/// Why a skill stopped without succeeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FailReason {
    StartBlocked,
    NoPath,
    GraspFailed { detail: String },
    Dropped { object: String, on: String },
    Unreachable { detail: String },
    Trajectory { detail: String },
    Timeout,
}

impl std::fmt::Display for FailReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailReason::StartBlocked => write!(f, "start pose is blocked"),
            FailReason::NoPath => write!(f, "no path to the goal"),
            FailReason::GraspFailed { detail } => write!(f, "grasp failed: {detail}"),
            FailReason::Dropped { object, on } => write!(f, "{object} dropped onto {on}"),
            FailReason::Unreachable { detail } => write!(f, "unreachable: {detail}"),
            FailReason::Trajectory { detail } => write!(f, "bad trajectory: {detail}"),
            FailReason::Timeout => write!(f, "timed out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SkillStatus {
    Succeeded,
    Failed(FailReason),
    Aborted,
}

/// A request from a skill to change the world rather than the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    Attach { object: String },
    Release { object: String },
}

/// What the world made of the last [`Effect`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum EffectResult {
    Attached,
    Placed { on: String },
    Dropped { on: String },
    Failed { detail: String },
}

/// Read-only view a skill gets at each update.
pub struct SkillContext<'a> {
    pub cfg: &'a Config,
    pub scene: &'a Scene,
    pub state: &'a ControllerState,
    /// Nominal hand state, `None` after free-form targets.
    pub hands: Option<HandState>,
    /// Result of the effect requested at the previous update.
    pub effect: Option<&'a EffectResult>,
    /// Seconds since the skill started.
    pub elapsed: f64,
}

impl SkillContext<'_> {
    /// Hand separation to keep while carrying, if anything is carried.
    pub fn grip(&self) -> Option<f64> {
        self.scene.carried_box().map(|b| b.size)
    }
}

/// One update of a running skill.
#[derive(Debug, Clone, PartialEq)]
pub enum SkillStep {
    Run { command: EeRootCommand, hands: Option<HandState>, effect: Option<Effect> },
    Done(Result<(), FailReason>),
}

impl SkillStep {
    pub fn run(command: EeRootCommand, hands: Option<HandState>) -> Self {
        SkillStep::Run { command, hands, effect: None }
    }
}

pub trait Skill: Send {
    fn update(&mut self, ctx: &SkillContext) -> SkillStep;
}

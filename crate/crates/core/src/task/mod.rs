//! Reason–act–observe loop turning an instruction into skill invocations.

mod failure;
mod goal;
mod llm;
mod prompt;
mod scripted;

pub use failure::{classify_failure, FailureClass};
pub use goal::{spatial_region, Goal};
pub use llm::{LlmBackend, LlmConfig};
pub use prompt::{build_system_prompt, FurnitureInfo, ObjectInfo, SceneSummary, APPROACH_STANDOFF};
pub use scripted::ScriptedBackend;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::runtime::{Observation, Runtime, SkillOutcome};
use crate::skills::{SkillCall, SkillError, SkillStatus};
use crate::world::Scene;

#[derive(Debug, Clone, Error, PartialEq, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum TaskError {
    #[error("planner backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("iteration cap reached")]
    IterationCap,
    #[error("too many invalid tool calls in a row")]
    TooManyCorrections,
}

/// A function call as the backend produced it, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Call { reasoning: String, call: ToolCall },
    Done { reasoning: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum TurnResult {
    /// The call failed validation or its safety check and was not executed.
    Rejected { error: SkillError },
    Executed {
        outcome: SkillOutcome,
        /// Control ticks at which the skill started and ended.
        start_tick: u64,
        end_tick: u64,
    },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub iteration: usize,
    pub reasoning: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call: Option<ToolCall>,
    #[serde(flatten)]
    pub result: TurnResult,
}

impl Turn {
    /// Text returned to the backend as the observation of this turn.
    pub fn observation_text(&self) -> String {
        match &self.result {
            TurnResult::Rejected { error } => serde_json::json!({"error": error.to_string()}).to_string(),
            TurnResult::Executed { outcome, .. } => serde_json::to_string(&outcome.observation).unwrap_or_default(),
            TurnResult::Done => String::new(),
        }
    }

    pub fn outcome(&self) -> Option<&SkillOutcome> {
        match &self.result {
            TurnResult::Executed { outcome, .. } => Some(outcome),
            _ => None,
        }
    }
}

/// System prompt, instruction and the alternating decision/observation turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub system_prompt: String,
    pub instruction: String,
    pub summary: SceneSummary,
    /// Observation before the first turn.
    pub initial: Observation,
    pub turns: Vec<Turn>,
}

impl Conversation {
    pub fn iterations(&self) -> usize {
        self.turns.len()
    }

    pub fn latest_observation(&self) -> &Observation {
        self.turns.iter().rev().find_map(|t| t.outcome().map(|o| &o.observation)).unwrap_or(&self.initial)
    }

    /// Invalid calls since the last executed one.
    pub fn trailing_rejections(&self) -> usize {
        self.turns.iter().rev().take_while(|t| matches!(t.result, TurnResult::Rejected { .. })).count()
    }
}

/// Chooses the next skill from the conversation so far.
pub trait Backend {
    fn decide(&mut self, conversation: &Conversation) -> Result<Decision, TaskError>;
}

/// Whatever runs skills for the task loop: a local runtime or a remote tick loop.
pub trait Executor {
    fn scene(&self) -> Scene;
    fn observation(&self) -> Observation;
    /// Simulated seconds.
    fn time(&self) -> f64;
    fn tick(&self) -> u64;
    fn execute(&mut self, call: SkillCall) -> Result<SkillOutcome, SkillError>;
}

impl Executor for Runtime {
    fn scene(&self) -> Scene {
        self.scene.clone()
    }

    fn observation(&self) -> Observation {
        Runtime::observation(self)
    }

    fn time(&self) -> f64 {
        Runtime::time(self)
    }

    fn tick(&self) -> u64 {
        self.tick_count()
    }

    fn execute(&mut self, call: SkillCall) -> Result<SkillOutcome, SkillError> {
        self.invoke(call)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub instruction: String,
    /// Judged by the goal predicate when one was given, else the backend's claim.
    pub success: bool,
    /// Whether the backend declared the task finished.
    pub claimed_done: bool,
    /// Skill invocations that were executed.
    pub steps: usize,
    pub elapsed_sim_time: f64,
    pub transcript: Vec<Turn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<TaskError>,
}

/// Runs the loop until the backend is done, fails or hits `max_iterations`.
pub fn run_task<E: Executor>(
    instruction: &str,
    backend: &mut dyn Backend,
    exec: &mut E,
    max_iterations: usize,
    goal: Option<&Goal>,
) -> (TaskResult, Conversation) {
    run_task_with(instruction, backend, exec, max_iterations, goal, |_| {})
}

/// [`run_task`] reporting every finished turn to `on_turn`.
pub fn run_task_with<E: Executor>(
    instruction: &str,
    backend: &mut dyn Backend,
    exec: &mut E,
    max_iterations: usize,
    goal: Option<&Goal>,
    mut on_turn: impl FnMut(&Turn),
) -> (TaskResult, Conversation) {
    let scene = exec.scene();
    let summary = SceneSummary::from_scene(&scene);
    let mut conv = Conversation {
        system_prompt: build_system_prompt(&summary),
        instruction: instruction.to_string(),
        summary,
        initial: exec.observation(),
        turns: Vec::new(),
    };
    let t0 = exec.time();
    let mut claimed_done = false;
    let mut error = None;
    loop {
        if conv.turns.len() >= max_iterations {
            error = Some(TaskError::IterationCap);
            break;
        }
        let iteration = conv.turns.len();
        let decision = match backend.decide(&conv) {
            Ok(d) => d,
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        let turn = match decision {
            Decision::Done { reasoning } => {
                claimed_done = true;
                Turn { iteration, reasoning, call: None, result: TurnResult::Done }
            }
            Decision::Call { reasoning, call } => {
                let parsed = SkillCall::parse(&call.name, &call.arguments, Some(&exec.scene()));
                let start_tick = exec.tick();
                let result = match parsed.and_then(|c| exec.execute(c)) {
                    Ok(outcome) => TurnResult::Executed { outcome, start_tick, end_tick: exec.tick() },
                    Err(error) => TurnResult::Rejected { error },
                };
                Turn { iteration, reasoning, call: Some(call), result }
            }
        };
        on_turn(&turn);
        let done = matches!(turn.result, TurnResult::Done);
        conv.turns.push(turn);
        if done {
            break;
        }
    }
    let steps = conv.turns.iter().filter(|t| t.outcome().is_some()).count();
    let success = match goal {
        Some(g) => g.check(&exec.scene(), &exec.observation()),
        None => claimed_done && error.is_none(),
    };
    let result = TaskResult {
        instruction: instruction.to_string(),
        success,
        claimed_done,
        steps,
        elapsed_sim_time: exec.time() - t0,
        transcript: conv.turns.clone(),
        error,
    };
    (result, conv)
}

/// Whether every executed skill in the transcript succeeded.
pub fn all_skills_succeeded(transcript: &[Turn]) -> bool {
    transcript.iter().filter_map(|t| t.outcome()).all(|o| o.status == SkillStatus::Succeeded)
}

//! Failure taxonomy for finished tasks.

use serde::{Deserialize, Serialize};

use super::{Goal, TaskError, TaskResult, TurnResult};
use crate::skills::{FailReason, SkillError, SkillStatus};
use crate::world::{Scene, WorldEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    /// Misunderstood instruction, invalid call, wrong target or unusable backend.
    LlmError,
    /// Grasp or release went wrong.
    Manipulation,
    /// The object fell while walking, or walking itself failed.
    Locomotion,
    /// Failed for a reason none of the rules cover.
    Other,
    None,
}

impl FailureClass {
    pub fn label(self) -> &'static str {
        match self {
            FailureClass::LlmError => "LLM error",
            FailureClass::Manipulation => "manipulation",
            FailureClass::Locomotion => "locomotion",
            FailureClass::Other => "other",
            FailureClass::None => "none",
        }
    }
}

/// Applies the rules in priority order: planner errors, then manipulation, then locomotion.
pub fn classify_failure(result: &TaskResult, final_scene: &Scene, goal: Option<&Goal>) -> FailureClass {
    if result.success {
        return FailureClass::None;
    }
    let turns = &result.transcript;
    let executed: Vec<_> = turns
        .iter()
        .filter_map(|t| match &t.result {
            TurnResult::Executed { outcome, start_tick, end_tick } => Some((outcome, *start_tick, *end_tick)),
            _ => None,
        })
        .collect();

    // a safety refusal right after a drop is a consequence of the drop, not a planning error
    let mut last_end = 0;
    let bad_call = turns.iter().any(|t| match &t.result {
        TurnResult::Executed { end_tick, .. } => {
            last_end = *end_tick;
            false
        }
        TurnResult::Rejected { error: SkillError::UnknownSkill(_) | SkillError::ParamValidation(_) } => true,
        TurnResult::Rejected { error: SkillError::SafetyViolation(_) } => !dropped_by(final_scene, last_end),
        _ => false,
    });
    let backend = matches!(result.error, Some(TaskError::BackendUnavailable(_) | TaskError::TooManyCorrections | TaskError::IterationCap));
    let wrong_object = goal.is_some_and(|g| {
        let wanted = g.objects();
        !wanted.is_empty()
            && turns.iter().filter_map(|t| t.call.as_ref()).any(|c| {
                c.name == "grasp" && c.arguments["object"].as_str().is_some_and(|o| !wanted.contains(&o))
            })
    });
    let nothing_failed = executed.iter().all(|(o, _, _)| o.status == SkillStatus::Succeeded) && !drop_in(final_scene, &executed, |_| true);
    if bad_call || backend || wrong_object || executed.is_empty() || nothing_failed {
        return FailureClass::LlmError;
    }

    let manipulation = executed.iter().any(|(o, _, _)| {
        matches!(
            (&o.skill[..], &o.status),
            ("grasp" | "place", SkillStatus::Failed(FailReason::GraspFailed { .. }))
        )
    }) || drop_in(final_scene, &executed, |s| s == "grasp" || s == "place");
    if manipulation {
        return FailureClass::Manipulation;
    }

    let locomotion = drop_in(final_scene, &executed, |s| s == "move_to")
        || executed.iter().any(|(o, _, _)| o.skill == "move_to" && o.status != SkillStatus::Succeeded);
    if locomotion {
        return FailureClass::Locomotion;
    }
    FailureClass::Other
}

fn dropped_by(scene: &Scene, tick: u64) -> bool {
    scene.events.iter().any(|e| matches!(e, WorldEvent::Dropped { .. }) && e.tick() <= tick)
}

/// Whether an object was dropped while a skill accepted by `which` was running.
fn drop_in(scene: &Scene, spans: &[(&crate::runtime::SkillOutcome, u64, u64)], which: impl Fn(&str) -> bool) -> bool {
    scene.events.iter().any(|e| match e {
        WorldEvent::Dropped { tick, .. } => spans.iter().any(|(o, s, end)| which(&o.skill) && *s < *tick && *tick <= *end),
        _ => false,
    })
}

//! Template-matching backend: regular expressions over the instruction map to a
//! fixed skill sequence.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::json;

use super::prompt::{FurnitureInfo, SceneSummary, APPROACH_STANDOFF};
use super::{Backend, Conversation, Decision, TaskError, ToolCall, TurnResult};
use crate::runtime::Observation;
use crate::skills::SkillStatus;
use crate::world::{Furniture, FurnitureKind};

/// Where on its surface the spatial-relation placement lands, meters from the left end.
const LEFT_END_INSET: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
enum Intent {
    Hands(&'static str),
    GoTo(String),
    /// Objects (by colour, `None` for "the box"), optional source, destination, and
    /// whether to put them at the destination's left end.
    Move { objects: Vec<Option<String>>, from: Option<String>, to: String, left_of: bool },
}

const F: &str = r"(table|sofa|couch|bed)";

fn furniture_name(s: &str) -> String {
    if s == "couch" { "sofa".into() } else { s.into() }
}

struct Templates {
    long: Regex,
    left_of: Regex,
    pick_place: Regex,
    carry: Regex,
    put: Regex,
    belongs: Regex,
    go: Regex,
    ready: Regex,
    rest: Regex,
    hold: Regex,
}

fn templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(|| {
        let r = |p: String| Regex::new(&p).expect("template compiles");
        Templates {
            long: r(format!(r"^(?:put|place|move|bring|set|carry) (?:both )?the (\w+) box and the (\w+) box (?:on|onto|to|on top of) the {F}$")),
            left_of: r(format!(r"^(?:put|place|set|move|leave) the (?:(\w+) )?box (?:to the left of|left of|on the left side of|at the left of) the {F}$")),
            pick_place: r(format!(
                r"^(?:pick up|grab|take|lift|get) the (?:(\w+) )?box(?: (?:from|off|off of) the {F})? and (?:then )?(?:place|put|set|drop|leave) it (?:on|onto|on top of) the {F}$"
            )),
            carry: r(format!(r"^(?:move|bring|carry|transfer|take|relocate) the (?:(\w+) )?box(?: (?:from|off) the {F})? (?:over )?(?:to|onto|on to|on) the {F}$")),
            put: r(format!(r"^(?:put|place|set) the (?:(\w+) )?box (?:on|onto|on top of) the {F}$")),
            belongs: r(format!(r"^the (?:(\w+) )?box (?:belongs|goes|should go|should be) on the {F}$")),
            go: r(format!(r"^(?:(?:go|walk|move|head|navigate|get)(?: over)?(?: up)? to|approach|come to) the {F}$")),
            ready: r(r"^(?:raise|lift|put up) (?:both |your )?(?:hands|arms)(?: up)?$|^(?:put )?(?:your |both )?hands up$|^get ready to (?:grab|grasp) something$|^prepare to grasp$".into()),
            rest: r(r"^(?:lower|relax|rest|drop) (?:both |your )?(?:hands|arms)$|^(?:put|bring) (?:both |your )?(?:hands|arms) down$|^(?:hands|arms) down$|^(?:go to|return to) rest(?: pose)?$".into()),
            hold: r(r"^(?:hold|bring|keep) (?:both |your )?(?:hands|arms) (?:in front(?: of you)?|close to your body|near your chest)$|^(?:take|assume) (?:the )?carrying (?:pose|position)$".into()),
        }
    })
}

fn normalize(text: &str) -> String {
    let cleaned: String = text.to_lowercase().chars().map(|c| if c.is_alphanumeric() || c == ' ' { c } else { ' ' }).collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let mut s = words.join(" ");
    for prefix in ["please ", "robot "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.to_string();
        }
    }
    s.trim_end_matches(" please").to_string()
}

fn parse(instruction: &str) -> Option<Intent> {
    let t = templates();
    let s = normalize(instruction);
    let g = |c: &regex::Captures, i: usize| c.get(i).map(|m| m.as_str().to_string());
    if let Some(c) = t.long.captures(&s) {
        return Some(Intent::Move { objects: vec![g(&c, 1), g(&c, 2)], from: None, to: furniture_name(&c[3]), left_of: false });
    }
    if let Some(c) = t.left_of.captures(&s) {
        return Some(Intent::Move { objects: vec![g(&c, 1)], from: None, to: furniture_name(&c[2]), left_of: true });
    }
    for re in [&t.pick_place, &t.carry] {
        if let Some(c) = re.captures(&s) {
            let from = g(&c, 2).map(|f| furniture_name(&f));
            return Some(Intent::Move { objects: vec![g(&c, 1)], from, to: furniture_name(&c[3]), left_of: false });
        }
    }
    for re in [&t.put, &t.belongs] {
        if let Some(c) = re.captures(&s) {
            return Some(Intent::Move { objects: vec![g(&c, 1)], from: None, to: furniture_name(&c[2]), left_of: false });
        }
    }
    if let Some(c) = t.go.captures(&s) {
        return Some(Intent::GoTo(furniture_name(&c[1])));
    }
    for (re, state) in [(&t.ready, "READY"), (&t.rest, "REST"), (&t.hold, "HOLD")] {
        if re.is_match(&s) {
            return Some(Intent::Hands(state));
        }
    }
    None
}

fn geometry(f: &FurnitureInfo) -> Option<Furniture> {
    Some(Furniture {
        kind: FurnitureKind::from_id(&f.id)?,
        center: f.center,
        length: f.length,
        depth: f.depth,
        height: f.height,
        facing: f.facing,
    })
}

fn call(name: &str, arguments: serde_json::Value) -> ToolCall {
    ToolCall { name: name.into(), arguments }
}

fn move_to(f: &Furniture, lateral: f64) -> ToolCall {
    let a = f.approach_pose(APPROACH_STANDOFF, lateral, 0.0);
    let r = |v: f64| (v * 1000.0).round() / 1000.0;
    // truncated so a heading of π stays inside the parameter range
    let theta = (a.yaw * 1000.0).trunc() / 1000.0;
    call("move_to", json!({"x": r(a.x), "y": r(a.y), "theta": theta}))
}

/// Skill sequence for an instruction, or why there is none.
fn plan(instruction: &str, summary: &SceneSummary, obs: &Observation) -> Result<Vec<ToolCall>, String> {
    let intent = parse(instruction).ok_or_else(|| "no template matches the instruction".to_string())?;
    let furniture = |id: &str| summary.furniture(id).and_then(geometry).ok_or_else(|| format!("there is no {id}"));
    match intent {
        Intent::Hands(state) => Ok(vec![call("set_hands", json!({"state": state}))]),
        Intent::GoTo(id) => Ok(vec![move_to(&furniture(&id)?, 0.0)]),
        Intent::Move { objects, from, to, left_of } => {
            let dst = furniture(&to)?;
            let n = objects.len();
            let mut calls = Vec::new();
            let mut taken: Vec<String> = Vec::new();
            for (k, colour) in objects.iter().enumerate() {
                let candidates = obs.objects.iter().filter(|o| !taken.contains(&o.id));
                let object = match colour {
                    Some(c) => candidates.into_iter().find(|o| o.id == format!("{c}_box")),
                    None => candidates.into_iter().find(|o| from.as_ref().is_none_or(|f| o.status == format!("on {f}"))),
                }
                .ok_or_else(|| format!("no matching box for `{}`", colour.as_deref().unwrap_or("box")))?;
                taken.push(object.id.clone());
                let src_id = object.status.strip_prefix("on ").ok_or_else(|| format!("{} is not on furniture", object.id))?;
                let src = furniture(src_id)?;
                let (lateral, _) = src.local_coords(&nalgebra::Vector2::new(object.position[0], object.position[1]));
                let offset = if left_of {
                    dst.length / 2.0 - LEFT_END_INSET
                } else if n > 1 {
                    // spread several objects along the surface
                    let span = (dst.length / 2.0 - LEFT_END_INSET).min(0.4);
                    span * (2.0 * k as f64 / (n - 1) as f64 - 1.0)
                } else {
                    0.0
                };
                let offset = (offset * 1000.0).round() / 1000.0;
                calls.push(move_to(&src, lateral));
                calls.push(call("set_hands", json!({"state": "READY"})));
                calls.push(call("grasp", json!({"object": object.id})));
                calls.push(call("set_hands", json!({"state": "HOLD"})));
                calls.push(move_to(&dst, offset));
                calls.push(if offset == 0.0 {
                    call("place", json!({"surface": to}))
                } else {
                    call("place", json!({"surface": to, "offset": offset}))
                });
            }
            Ok(calls)
        }
    }
}

/// Deterministic backend: same instruction and observations, same calls. Gives
/// up at the first failed or rejected skill.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend;

impl ScriptedBackend {
    pub fn new() -> Self {
        Self
    }

    /// Whether some template recognises `instruction`.
    pub fn understands(instruction: &str) -> bool {
        parse(instruction).is_some()
    }
}

impl Backend for ScriptedBackend {
    fn decide(&mut self, conv: &Conversation) -> Result<Decision, TaskError> {
        if let Some(last) = conv.turns.last() {
            let failed = match &last.result {
                TurnResult::Rejected { error } => Some(error.to_string()),
                TurnResult::Executed { outcome, .. } if outcome.status != SkillStatus::Succeeded => {
                    Some(crate::runtime::status_text(&outcome.status))
                }
                _ => None,
            };
            if let Some(why) = failed {
                return Ok(Decision::Done { reasoning: format!("stopping: the last skill {why}") });
            }
        }
        let calls = match plan(&conv.instruction, &conv.summary, &conv.initial) {
            Ok(c) => c,
            Err(why) => return Ok(Decision::Done { reasoning: format!("cannot do this: {why}") }),
        };
        let k = conv.turns.len();
        match calls.get(k) {
            Some(c) => Ok(Decision::Call { reasoning: format!("step {} of {}: {}", k + 1, calls.len(), c.name), call: c.clone() }),
            None => Ok(Decision::Done { reasoning: "all steps done".into() }),
        }
    }
}

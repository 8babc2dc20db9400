//! Headless tick loop tying the scene, the controller and the active skill together.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::command::EeRootCommand;
use crate::config::Config;
use crate::controller::{self, ControllerError, ControllerState, Mailbox};
use crate::impedance::ExternalForce;
use crate::pose::RootPose;
use crate::skills::builtin::instantiate;
use crate::skills::hand::HandState;
use crate::skills::{
    Effect, EffectResult, FailReason, Safety, Skill, SkillCall, SkillContext, SkillError, SkillStatus, SkillStep,
};
use crate::world::{BoxStatus, GraspError, PlaceResult, Scene};

/// Terminal result of one skill invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillOutcome {
    pub skill: String,
    #[serde(flatten)]
    pub status: SkillStatus,
    /// Control ticks the skill ran for.
    pub ticks: u64,
    pub observation: Observation,
}

impl SkillOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == SkillStatus::Succeeded
    }
}

/// Ticks `[start, end)` during which a skill was active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpan {
    pub skill: String,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObservation {
    pub id: String,
    pub position: [f64; 3],
    /// `on table`, `carried`, `fallen on floor`, ...
    pub status: String,
}

/// What the task layer sees after every skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub root: [f64; 4],
    /// Hand positions in the root frame.
    pub ee_left: [f64; 3],
    pub ee_right: [f64; 3],
    /// Nominal hand state, `null` after free-form targets or teleop.
    pub hand_state: Option<String>,
    pub locomotion_safe: bool,
    pub carrying: Option<String>,
    pub objects: Vec<ObjectObservation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_skill: Option<LastSkill>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastSkill {
    pub skill: String,
    pub status: String,
}

fn round(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

fn r3(v: &Vector3<f64>) -> [f64; 3] {
    [round(v.x, 3), round(v.y, 3), round(v.z, 3)]
}

pub fn status_text(status: &SkillStatus) -> String {
    match status {
        SkillStatus::Succeeded => "succeeded".into(),
        SkillStatus::Failed(r) => format!("failed: {r}"),
        SkillStatus::Aborted => "aborted".into(),
    }
}

/// One tick of recorded telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSample {
    pub tick: u64,
    pub command: EeRootCommand,
    pub root: RootPose,
    pub ee_left: [f64; 3],
    pub ee_right: [f64; 3],
}

struct Active {
    call: SkillCall,
    skill: Box<dyn Skill>,
    start: u64,
    effect: Option<EffectResult>,
}

/// Whether a skill may start with the hands in `hands` and `carrying` in them.
pub fn check_safety(safety: Safety, hands: Option<&HandState>, carrying: Option<&str>) -> Result<(), SkillError> {
    match safety {
        Safety::None => Ok(()),
        Safety::LocomotionSafe => match hands {
            Some(h) if h.locomotion_safe() => Ok(()),
            Some(HandState::Grasp(_)) if carrying.is_some() => Ok(()),
            Some(h) => Err(SkillError::SafetyViolation(format!("hands in {h}, which does not permit locomotion"))),
            None => Err(SkillError::SafetyViolation("hands are not in a canonical state".into())),
        },
        Safety::HandsFree => match carrying {
            Some(o) => Err(SkillError::SafetyViolation(format!("already carrying {o}"))),
            None => Ok(()),
        },
        Safety::Carrying => match carrying {
            Some(_) => Ok(()),
            None => Err(SkillError::SafetyViolation("nothing is carried".into())),
        },
    }
}

/// The simulated robot in its room, advanced one control period at a time.
pub struct Runtime {
    pub cfg: Config,
    pub scene: Scene,
    pub ctrl: ControllerState,
    forces: [ExternalForce; 2],
    /// Nominal hand state, `None` once the hands were driven freely.
    pub hands: Option<HandState>,
    active: Option<Active>,
    pub spans: Vec<SkillSpan>,
    pub last_outcome: Option<SkillOutcome>,
    /// Commands from outside the skill layer (teleop, external planners).
    pub mailbox: Mailbox,
    pub record: Option<Vec<TickSample>>,
}

impl Runtime {
    /// Robot at the room origin facing `+x`, hands at REST.
    pub fn new(cfg: Config, scene: Scene) -> Self {
        let root = RootPose::new(0.0, 0.0, cfg.nominal_root_height, 0.0);
        Self::with_root(cfg, scene, root)
    }

    pub fn with_root(cfg: Config, scene: Scene, root: RootPose) -> Self {
        let ctrl = ControllerState::settled(&cfg, root, &HandState::Rest);
        Self {
            cfg,
            scene,
            ctrl,
            forces: [ExternalForce::zero(), ExternalForce::zero()],
            hands: Some(HandState::Rest),
            active: None,
            spans: Vec::new(),
            last_outcome: None,
            mailbox: Mailbox::new(),
            record: None,
        }
    }

    pub fn tick_count(&self) -> u64 {
        self.ctrl.tick
    }

    /// Simulated seconds since start.
    pub fn time(&self) -> f64 {
        self.ctrl.tick as f64 * self.cfg.timestep
    }

    pub fn is_busy(&self) -> bool {
        self.active.is_some()
    }

    pub fn active_skill(&self) -> Option<&str> {
        self.active.as_ref().map(|a| a.call.name())
    }

    /// Forces measured at the end of the last tick.
    pub fn forces(&self) -> &[ExternalForce; 2] {
        &self.forces
    }

    /// Starts `call` after checking its safety requirement.
    pub fn start(&mut self, call: SkillCall) -> Result<(), SkillError> {
        if self.active.is_some() {
            return Err(SkillError::Busy);
        }
        let carrying = self.scene.carried_box().map(|b| b.id.clone());
        check_safety(call.safety(), self.hands.as_ref(), carrying.as_deref())?;
        let skill = instantiate(&call);
        self.active = Some(Active { call, skill, start: self.ctrl.tick, effect: None });
        Ok(())
    }

    /// Stops the running skill; its outcome is `Aborted`.
    pub fn abort(&mut self) -> Option<SkillOutcome> {
        self.active.is_some().then(|| self.finish(SkillStatus::Aborted))
    }

    fn finish(&mut self, status: SkillStatus) -> SkillOutcome {
        let active = self.active.take().expect("a skill is running");
        let ticks = self.ctrl.tick - active.start;
        self.spans.push(SkillSpan { skill: active.call.name().to_string(), start: active.start, end: self.ctrl.tick });
        let skill = active.call.name().to_string();
        // the terminal observation already reports this outcome as the last skill
        let mut outcome = SkillOutcome { skill, status, ticks, observation: self.observation() };
        outcome.observation.last_skill = Some(LastSkill { skill: outcome.skill.clone(), status: status_text(&outcome.status) });
        self.last_outcome = Some(outcome.clone());
        outcome
    }

    fn is_skill_tick(&self) -> bool {
        let rate = self.cfg.skill_rate * self.cfg.timestep;
        let t = self.ctrl.tick;
        t == 0 || (t as f64 * rate).floor() != ((t - 1) as f64 * rate).floor()
    }

    fn apply(&mut self, effect: &Effect) -> EffectResult {
        let ee = self.ctrl.ee_poses(&self.cfg);
        match effect {
            Effect::Attach { object } => match self.scene.try_grasp(&ee, &self.ctrl.root, object, &self.cfg.grasp) {
                Ok(()) => EffectResult::Attached,
                Err(GraspError::GraspFailed { distance_left, distance_right }) => EffectResult::Failed {
                    detail: format!("hands {distance_left:.3} m and {distance_right:.3} m from the faces of {object}"),
                },
                Err(e) => EffectResult::Failed { detail: e.to_string() },
            },
            Effect::Release { object } => match self.scene.try_release(object, &self.cfg.grasp) {
                Ok(PlaceResult::Placed { on }) => EffectResult::Placed { on },
                Ok(PlaceResult::Dropped { on }) => EffectResult::Dropped { on },
                Err(e) => EffectResult::Failed { detail: e.to_string() },
            },
        }
    }

    /// Runs one skill update if this is a skill tick. Returns the outcome when the skill ends.
    fn update_skill(&mut self) -> Option<SkillOutcome> {
        let active = self.active.as_mut()?;
        let elapsed = (self.ctrl.tick - active.start) as f64 * self.cfg.timestep;
        if elapsed > self.cfg.skill_timeout {
            return Some(self.finish(SkillStatus::Failed(FailReason::Timeout)));
        }
        let first = self.ctrl.tick == active.start;
        if !first && !self.is_skill_tick() {
            return None;
        }
        let active = self.active.as_mut()?;
        let effect = active.effect.take();
        let ctx = SkillContext {
            cfg: &self.cfg,
            scene: &self.scene,
            state: &self.ctrl,
            hands: self.hands,
            effect: effect.as_ref(),
            elapsed,
        };
        match active.skill.update(&ctx) {
            SkillStep::Run { command, hands, effect } => {
                self.ctrl.command = command;
                self.hands = hands;
                if let Some(e) = effect {
                    let result = self.apply(&e);
                    if let Some(a) = self.active.as_mut() {
                        a.effect = Some(result);
                    }
                }
                None
            }
            SkillStep::Done(Ok(())) => Some(self.finish(SkillStatus::Succeeded)),
            SkillStep::Done(Err(r)) => Some(self.finish(SkillStatus::Failed(r))),
        }
    }

    /// Advances one control period. Returns the outcome of a skill that ended during it.
    pub fn tick(&mut self) -> Result<Option<SkillOutcome>, ControllerError> {
        let outcome = self.update_skill();
        if self.active.is_none() {
            if let Some(cmd) = self.mailbox.take() {
                self.ctrl.command = cmd;
                self.hands = None;
            }
        }
        let cmd = self.ctrl.command;
        self.ctrl = controller::step(&self.ctrl, &cmd, &self.forces, &self.cfg)?;
        let ee = self.ctrl.ee_poses(&self.cfg);
        let margin = self.cfg.hands.squeeze_margin;
        self.forces = self.scene.step(&ee, &self.ctrl.root, |w| w - 2.0 * margin, &self.cfg.grasp, self.cfg.contact_stiffness, self.cfg.timestep);
        if let Some(rec) = self.record.as_mut() {
            let p = |v: &Vector3<f64>| [v.x, v.y, v.z];
            rec.push(TickSample { tick: self.ctrl.tick, command: cmd, root: self.ctrl.root, ee_left: p(&ee.0.position), ee_right: p(&ee.1.position) });
        }
        Ok(outcome)
    }

    /// Runs `call` to completion.
    pub fn invoke(&mut self, call: SkillCall) -> Result<SkillOutcome, SkillError> {
        self.start(call)?;
        loop {
            match self.tick() {
                Ok(Some(outcome)) => return Ok(outcome),
                Ok(None) => {}
                Err(e) => {
                    let outcome = self.finish(SkillStatus::Failed(FailReason::Trajectory { detail: e.to_string() }));
                    return Ok(outcome);
                }
            }
        }
    }

    /// Runs `n` ticks with whatever command is held.
    pub fn run_ticks(&mut self, n: usize) -> Result<(), ControllerError> {
        for _ in 0..n {
            self.tick()?;
        }
        Ok(())
    }

    /// Replaces the held command directly, outside any skill.
    pub fn hold(&mut self, cmd: EeRootCommand) {
        self.ctrl.command = cmd;
        self.hands = None;
    }

    pub fn observation(&self) -> Observation {
        let (l, r) = self.ctrl.ee_in_root(&self.cfg);
        let root = &self.ctrl.root;
        let carrying = self.scene.carried_box().map(|b| b.id.clone());
        let objects = self
            .scene
            .boxes
            .iter()
            .map(|b| ObjectObservation {
                id: b.id.clone(),
                position: r3(&b.position),
                status: match &b.status {
                    BoxStatus::Resting { on } => format!("on {}", on.id()),
                    BoxStatus::Carried => "carried".into(),
                    BoxStatus::Fallen { on } => format!("fallen on {}", on.id()),
                },
            })
            .collect();
        let safe = check_safety(Safety::LocomotionSafe, self.hands.as_ref(), carrying.as_deref()).is_ok();
        Observation {
            root: [round(root.x, 3), round(root.y, 3), round(root.z, 3), round(root.yaw, 3)],
            ee_left: r3(&l.position),
            ee_right: r3(&r.position),
            hand_state: self.hands.map(|h| h.name().to_string()),
            locomotion_safe: safe,
            carrying,
            objects,
            last_skill: self.last_outcome.as_ref().map(|o| LastSkill { skill: o.skill.clone(), status: status_text(&o.status) }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skills::hand::GraspParams;

    fn rt() -> Runtime {
        Runtime::new(Config::default(), crate::world::ScenarioSpec::with_seed(1).sample())
    }

    #[test]
    fn set_hands_ready_from_rest() {
        let mut r = rt();
        let out = r.invoke(SkillCall::SetHands { state: HandState::Ready }).unwrap();
        assert!(out.succeeded(), "{out:?}");
        let (l, rr) = r.ctrl.ee_in_root(&r.cfg);
        let want = r.cfg.hands.pose(&HandState::Ready, crate::kinematics::Side::Left, None).position;
        assert!((l.position - want).norm() <= 0.02);
        assert!((rr.position.y + want.y).abs() <= 0.02);
        assert_eq!(r.spans.len(), 1);
    }

    #[test]
    fn locomotion_in_grasp_without_object_is_refused() {
        let mut r = rt();
        let out = r.invoke(SkillCall::SetHands { state: HandState::Grasp(GraspParams::new(0.2, 0.2)) }).unwrap();
        assert!(out.succeeded(), "{out:?}");
        let err = r.invoke(SkillCall::MoveTo { x: 0.5, y: 0.0, theta: 0.0 }).unwrap_err();
        assert!(matches!(err, SkillError::SafetyViolation(_)));
        assert!(r.spans.len() == 1);
    }

    #[test]
    fn place_needs_an_object() {
        let mut r = rt();
        let err = r.invoke(SkillCall::Place { surface: "bed".into(), offset: None }).unwrap_err();
        assert!(matches!(err, SkillError::SafetyViolation(_)));
    }

    #[test]
    fn observation_is_compact() {
        let r = rt();
        let json = serde_json::to_string(&r.observation()).unwrap();
        assert!(json.len() <= 2048, "{}", json.len());
        assert!(json.contains("red_box"));
    }

    #[test]
    fn skill_ticks_run_at_skill_rate() {
        let mut n = 0;
        let mut probe = rt();
        for _ in 0..150 {
            if probe.is_skill_tick() {
                n += 1;
            }
            probe.ctrl.tick += 1;
        }
        // 3 s at 15 Hz
        assert!((45..=46).contains(&n), "{n}");
    }
}

//! The robot as seen through the wire protocol: a runtime plus the teleop
//! session and the bookkeeping of who started the running skill.
//!
//! Everything here is synchronous and deterministic; the server and
//! `simulate` both drive a [`Session`] from a single thread.

use eeroot::command::{EeRootCommand, COMMAND_DIM};
use eeroot::runtime::{Runtime, SkillOutcome};
use eeroot::skills::teleop::{teleop_map, KeySteps, TeleopMode};
use eeroot::skills::{SkillCall, SkillError};

use crate::protocol::{ClientMessage, EeRootMode, ErrorCode, RobotState, ServerMessage, TeleopSession};

pub type ClientId = u64;

/// Rate of `state` messages, Hz of simulated time.
pub const STATE_RATE: f64 = 20.0;

/// Who started the running skill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Client(ClientId),
    Task,
}

/// A message for one client, or for all of them when `to` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: Option<ClientId>,
    pub message: ServerMessage,
}

impl Outgoing {
    pub fn all(message: ServerMessage) -> Self {
        Self { to: None, message }
    }

    pub fn to(client: ClientId, message: ServerMessage) -> Self {
        Self { to: Some(client), message }
    }
}

/// Messages produced by one call, plus the outcome of a task skill that ended.
#[derive(Debug, Default)]
pub struct Report {
    pub messages: Vec<Outgoing>,
    pub task_outcome: Option<SkillOutcome>,
}

pub struct Session {
    pub rt: Runtime,
    pub steps: KeySteps,
    teleop: Option<(ClientId, TeleopMode)>,
    running: Option<Source>,
}

fn skill_error(e: &SkillError) -> ServerMessage {
    let code = match e {
        SkillError::UnknownSkill(_) => ErrorCode::UnknownSkill,
        SkillError::ParamValidation(_) => ErrorCode::BadParams,
        SkillError::SafetyViolation(_) => ErrorCode::SafetyViolation,
        SkillError::Busy => ErrorCode::SkillActive,
    };
    ServerMessage::error(code, e.to_string())
}

impl Session {
    pub fn new(rt: Runtime) -> Self {
        Self { rt, steps: KeySteps::default(), teleop: None, running: None }
    }

    pub fn teleop(&self) -> Option<TeleopMode> {
        self.teleop.map(|(_, m)| m)
    }

    pub fn teleop_active(&self) -> bool {
        self.teleop.is_some()
    }

    pub fn state(&self) -> RobotState {
        RobotState::capture(&self.rt, self.teleop())
    }

    /// Whether the tick that just ran is one at which `state` is published.
    pub fn state_due(&self) -> bool {
        let rate = STATE_RATE * self.rt.cfg.timestep;
        let t = self.rt.tick_count();
        t == 0 || (t as f64 * rate).floor() != ((t - 1) as f64 * rate).floor()
    }

    /// Starts a skill on behalf of the task layer.
    pub fn start_task_skill(&mut self, call: SkillCall) -> Result<(), SkillError> {
        if self.teleop.is_some() {
            return Err(SkillError::SafetyViolation("a teleop session is active".into()));
        }
        self.rt.start(call)?;
        self.running = Some(Source::Task);
        Ok(())
    }

    fn finished(&mut self, outcome: SkillOutcome, report: &mut Report) {
        let source = self.running.take();
        let label = if source == Some(Source::Task) { "task" } else { "client" };
        report.messages.push(Outgoing::all(ServerMessage::SkillDone { source: label.into(), outcome: outcome.clone() }));
        if source == Some(Source::Task) {
            report.task_outcome = Some(outcome);
        }
    }

    fn abort(&mut self, report: &mut Report) {
        if let Some(outcome) = self.rt.abort() {
            self.finished(outcome, report);
        }
    }

    /// Advances one control period; publishes `state` at [`STATE_RATE`].
    pub fn tick(&mut self) -> Report {
        let mut report = Report::default();
        match self.rt.tick() {
            Ok(Some(outcome)) => self.finished(outcome, &mut report),
            Ok(None) => {}
            Err(e) => {
                // only reachable through a non-finite command; drop the skill and hold still
                self.abort(&mut report);
                let hold = EeRootCommand { root: self.rt.ctrl.root, ..self.rt.ctrl.command };
                self.rt.hold(hold);
                report.messages.push(Outgoing::all(ServerMessage::error(ErrorCode::BadParams, e.to_string())));
            }
        }
        if self.state_due() {
            report.messages.push(Outgoing::all(ServerMessage::State(self.state())));
        }
        report
    }

    /// A client went away; its teleop session ends with it.
    pub fn disconnect(&mut self, client: ClientId) {
        if self.teleop.is_some_and(|(c, _)| c == client) {
            self.teleop = None;
        }
    }

    /// Applies one client command. `cmd.instruction` and `cmd.step` belong to the
    /// server and are refused here.
    pub fn handle(&mut self, client: ClientId, msg: ClientMessage) -> Report {
        let mut report = Report::default();
        let reply = |code, text: String| vec![Outgoing::to(client, ServerMessage::error(code, text))];
        let other_teleop = self.teleop.is_some_and(|(c, _)| c != client);
        match msg {
            ClientMessage::EeRoot { values, mode } => {
                if values.len() != COMMAND_DIM {
                    report.messages = reply(ErrorCode::BadDimension, format!("expected {COMMAND_DIM} numbers, got {}", values.len()));
                } else if other_teleop {
                    report.messages = reply(ErrorCode::TeleopActive, "another client holds the teleop session".into());
                } else if self.rt.is_busy() {
                    report.messages = reply(ErrorCode::SkillActive, "a skill is running".into());
                } else {
                    let values: Vec<f64> = match mode {
                        EeRootMode::Absolute => values,
                        EeRootMode::Delta => self.rt.ctrl.command.to_array().iter().zip(&values).map(|(a, b)| a + b).collect(),
                    };
                    match EeRootCommand::from_slice(&values) {
                        Ok(cmd) => self.rt.hold(cmd),
                        Err(e) => report.messages = reply(ErrorCode::BadParams, e.to_string()),
                    }
                }
            }
            ClientMessage::Teleop { session, input, mode } => {
                if other_teleop {
                    report.messages = reply(ErrorCode::TeleopActive, "another client holds the teleop session".into());
                    return report;
                }
                match session {
                    Some(TeleopSession::Start) => {
                        // teleop outranks autonomous skills
                        self.abort(&mut report);
                        self.teleop = Some((client, mode));
                    }
                    Some(TeleopSession::Stop) => self.teleop = None,
                    None => {}
                }
                if let Some(input) = input {
                    match &mut self.teleop {
                        Some((_, m)) => {
                            *m = mode;
                            let cmd = teleop_map(&self.rt.ctrl.command, &input, mode, &self.steps);
                            self.rt.hold(cmd);
                        }
                        None => report.messages.extend(reply(ErrorCode::NoTeleop, "start a teleop session first".into())),
                    }
                }
            }
            ClientMessage::Skill { name, params } => {
                if self.teleop.is_some() {
                    report.messages = reply(ErrorCode::TeleopActive, "skills are refused during teleop".into());
                } else if self.running == Some(Source::Task) {
                    report.messages = reply(ErrorCode::TaskActive, "an instruction is being carried out".into());
                } else {
                    let started = SkillCall::parse(&name, &params, Some(&self.rt.scene)).and_then(|c| self.rt.start(c));
                    match started {
                        Ok(()) => self.running = Some(Source::Client(client)),
                        Err(e) => report.messages = vec![Outgoing::to(client, skill_error(&e))],
                    }
                }
            }
            ClientMessage::Abort => self.abort(&mut report),
            ClientMessage::Instruction { .. } | ClientMessage::Step { .. } => {
                report.messages = reply(ErrorCode::BadMessage, "not handled by the session".into());
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use eeroot::config::Config;
    use eeroot::world::Scene;
    use serde_json::json;

    fn session() -> Session {
        Session::new(Runtime::new(Config::default(), Scene::empty(6.0)))
    }

    fn codes(r: &Report) -> Vec<ErrorCode> {
        r.messages
            .iter()
            .filter_map(|m| match &m.message {
                ServerMessage::Error { code, .. } => Some(*code),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn fifteen_numbers_is_a_bad_dimension() {
        let mut s = session();
        let r = s.handle(1, ClientMessage::EeRoot { values: vec![0.0; 15], mode: EeRootMode::Absolute });
        assert_eq!(codes(&r), [ErrorCode::BadDimension]);
        assert_eq!(r.messages[0].to, Some(1));
    }

    #[test]
    fn teleop_blocks_skills_and_other_clients() {
        let mut s = session();
        s.handle(1, ClientMessage::Teleop { session: Some(TeleopSession::Start), input: None, mode: TeleopMode::Mirrored });
        let skill = ClientMessage::Skill { name: "set_hands".into(), params: json!({"state": "READY"}) };
        assert_eq!(codes(&s.handle(1, skill.clone())), [ErrorCode::TeleopActive]);
        let start = ClientMessage::Teleop { session: Some(TeleopSession::Start), input: None, mode: TeleopMode::Independent };
        assert_eq!(codes(&s.handle(2, start)), [ErrorCode::TeleopActive]);
        s.disconnect(1);
        assert!(codes(&s.handle(2, skill)).is_empty());
    }

    #[test]
    fn teleop_start_aborts_the_running_skill() {
        let mut s = session();
        s.handle(1, ClientMessage::Skill { name: "set_hands".into(), params: json!({"state": "READY"}) });
        s.tick();
        assert!(s.rt.is_busy());
        let r = s.handle(2, ClientMessage::Teleop { session: Some(TeleopSession::Start), input: None, mode: TeleopMode::Independent });
        assert!(!s.rt.is_busy());
        assert!(matches!(&r.messages[0].message, ServerMessage::SkillDone { outcome, .. } if outcome.status == eeroot::skills::SkillStatus::Aborted));
    }

    #[test]
    fn state_every_fifth_of_the_ticks_per_second() {
        let mut s = session();
        let states: usize = (0..50).map(|_| s.tick().messages.iter().filter(|m| m.message.is_state()).count()).sum();
        assert_eq!(states, 20);
    }
}

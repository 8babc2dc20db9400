//! What the `eeroot` subcommands do, separated from argument parsing.

use std::io::{self, Write};
use std::path::Path;

use eeroot::config::Config;
use eeroot::locomotion::{plan, GridMap, PlannedPath};
use eeroot::runtime::Runtime;
use eeroot::world::{ScenarioSpec, Scene};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{ClientMessage, Envelope, ServerMessage};
use crate::session::Session;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Config::load(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display()))),
        None => Ok(Config::default()),
    }
}

/// The default scenario, or one read from a JSON file; `seed` replaces its seed.
pub fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioSpec, CliError> {
    let mut spec = match path {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
        None => ScenarioSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

/// One line of a command log: the command is applied before tick `tick` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedCommand {
    pub tick: u64,
    pub command: ClientMessage,
}

pub fn parse_command_log(text: &str) -> Result<Vec<LoggedCommand>, CliError> {
    let mut out: Vec<LoggedCommand> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: LoggedCommand = serde_json::from_str(line).map_err(|e| CliError::Invalid(format!("command log line {}: {e}", i + 1)))?;
        if out.last().is_some_and(|p| p.tick > c.tick) {
            return Err(CliError::Invalid(format!("command log line {}: ticks must not decrease", i + 1)));
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SimSummary {
    pub ticks: u64,
    pub states: usize,
    /// Non-state messages the commands produced (skill results, errors).
    pub events: Vec<ServerMessage>,
}

/// Steps a fresh session `ticks` times, applying logged commands as one client,
/// and writes every published `state` as a JSON line.
///
/// `cmd.instruction` needs the task layer and is refused here, as is `cmd.step`.
pub fn simulate(cfg: &Config, scene: Scene, ticks: u64, log: &[LoggedCommand], out: &mut dyn Write) -> io::Result<SimSummary> {
    let mut session = Session::new(Runtime::new(cfg.clone(), scene));
    let mut summary = SimSummary { ticks, ..Default::default() };
    let mut pending = log.iter().peekable();
    let mut seq = 0;
    for _ in 0..ticks {
        let now = session.rt.tick_count();
        let mut messages = Vec::new();
        while let Some(c) = pending.next_if(|c| c.tick <= now) {
            messages.extend(session.handle(1, c.command.clone()).messages);
        }
        messages.extend(session.tick().messages);
        for m in messages {
            if m.message.is_state() {
                seq += 1;
                writeln!(out, "{}", Envelope::new(seq, m.message).to_json())?;
                summary.states += 1;
            } else {
                summary.events.push(m.message);
            }
        }
    }
    out.flush()?;
    Ok(summary)
}

/// Parses `x,y,theta`.
pub fn parse_pose(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,theta, got `{s}`"));
    }
    let mut p = [0.0f64; 3];
    for (v, t) in p.iter_mut().zip(parts) {
        *v = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
        if !v.is_finite() {
            return Err(format!("`{t}` is not finite"));
        }
    }
    Ok(p)
}

/// A map file is either a scenario (JSON) or an ASCII grid with `#` for
/// obstacles and the configured planner resolution per character.
pub fn load_map(cfg: &Config, text: &str) -> Result<GridMap, CliError> {
    let p = &cfg.planner;
    if text.trim_start().starts_with('{') {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("scenario map: {e}")))?;
        return Ok(GridMap::from_scene(&spec.sample(), p.resolution, p.robot_radius));
    }
    GridMap::from_ascii(text, p.resolution, p.robot_radius).map_err(|e| CliError::Invalid(format!("ascii map: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutput {
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub length: f64,
    #[serde(flatten)]
    pub path: PlannedPath,
}

pub fn plan_route(cfg: &Config, map: &GridMap, start: [f64; 3], goal: [f64; 3]) -> Result<PlanOutput, CliError> {
    let path = plan(map, start, goal, &cfg.planner).map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(PlanOutput { start, goal, length: path.length(), path })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

//! Run-time configuration. Every field has a default; a JSON file only needs to
//! name the values it overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impedance::ImpedanceGains;
use crate::kinematics::{IkParams, RobotModel};
use crate::locomotion::PlannerConfig;
use crate::skills::hand::HandTable;
use crate::task::LlmConfig;
use crate::world::GraspRules;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Speed limits and proportional gains of the kinematic base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseLimits {
    /// Planar speed limit, m/s.
    pub linear_speed: f64,
    /// Pelvis height rate limit, m/s.
    pub vertical_speed: f64,
    /// Yaw rate limit, rad/s.
    pub yaw_rate: f64,
    /// Proportional gain on position error, 1/s.
    pub position_gain: f64,
    /// Proportional gain on yaw error, 1/s.
    pub yaw_gain: f64,
    pub min_height: f64,
    pub max_height: f64,
}

impl Default for BaseLimits {
    fn default() -> Self {
        Self {
            linear_speed: 0.8,
            vertical_speed: 0.3,
            yaw_rate: 1.5,
            position_gain: 6.0,
            yaw_gain: 6.0,
            min_height: 0.40,
            max_height: 0.80,
        }
    }
}

/// Damped-least-squares tuning; per-step limits are derived from the timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkTuning {
    pub damping: f64,
    pub position_weight: f64,
    pub orientation_weight: f64,
}

impl Default for IkTuning {
    fn default() -> Self {
        Self { damping: 0.05, position_weight: 1.0, orientation_weight: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Control period, seconds.
    pub timestep: f64,
    /// Rate at which mid-level skills emit commands, Hz.
    pub skill_rate: f64,
    pub gains: ImpedanceGains,
    /// Contact spring stiffness `k_s`, N/m.
    pub contact_stiffness: f64,
    /// Low-pass time constant on the compliance offset, seconds. Zero disables it.
    pub compliance_time_constant: f64,
    pub robot: RobotModel,
    pub base: BaseLimits,
    pub ik: IkTuning,
    /// Pelvis height used when no skill asks for anything else.
    pub nominal_root_height: f64,
    pub hands: HandTable,
    pub grasp: GraspRules,
    pub planner: PlannerConfig,
    /// Seconds before a running skill is aborted.
    pub skill_timeout: f64,
    pub max_iterations: usize,
    pub llm: LlmConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            timestep: 0.02,
            skill_rate: 15.0,
            gains: ImpedanceGains::default(),
            contact_stiffness: 500.0,
            compliance_time_constant: 0.1,
            robot: RobotModel::default(),
            base: BaseLimits::default(),
            ik: IkTuning::default(),
            nominal_root_height: 0.70,
            hands: HandTable::default(),
            grasp: GraspRules::default(),
            planner: PlannerConfig::default(),
            skill_timeout: 60.0,
            max_iterations: 40,
            llm: LlmConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.timestep > 0.0) {
            return invalid("timestep must be positive");
        }
        if !(self.skill_rate > 0.0) || self.skill_rate > 1.0 / self.timestep + 1e-9 {
            return invalid("skill_rate must be positive and no faster than the control rate");
        }
        if !(self.contact_stiffness > 0.0) {
            return invalid("contact_stiffness must be positive");
        }
        if self.compliance_time_constant < 0.0 {
            return invalid("compliance_time_constant must be non-negative");
        }
        let b = &self.base;
        if !(b.min_height < b.max_height) || !(b.min_height..=b.max_height).contains(&self.nominal_root_height) {
            return invalid("nominal_root_height must lie within [min_height, max_height]");
        }
        if !(self.ik.damping > 0.0) {
            return invalid("ik.damping must be positive");
        }
        if !(self.robot.joint_limit > 0.0 && self.robot.joint_limit.is_finite()) {
            return invalid("joint limits must be finite and positive");
        }
        Ok(())
    }

    pub fn control_rate(&self) -> f64 {
        1.0 / self.timestep
    }

    /// DLS parameters for one control tick.
    pub fn ik_params(&self) -> IkParams {
        IkParams {
            damping: self.ik.damping,
            position_weight: self.ik.position_weight,
            orientation_weight: self.ik.orientation_weight,
            root_assist: false,
            max_position_error: 0.1,
            max_orientation_error: 0.5,
            limit_weighting: false,
            max_joint_step: self.robot.joint_velocity_limit * self.timestep,
            max_root_step: self.base.linear_speed * self.timestep,
            max_yaw_step: self.base.yaw_rate * self.timestep,
        }
    }

    pub fn ticks_for(&self, seconds: f64) -> u64 {
        (seconds / self.timestep).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.control_rate(), 50.0);
        assert!((10.0..=20.0).contains(&cfg.skill_rate));
        assert_eq!(cfg.gains.stiffness()[(0, 0)], 100.0);
    }

    #[test]
    fn partial_json_overrides_defaults() {
        let cfg = Config::from_json(r#"{"skill_rate": 10, "contact_stiffness": 800}"#).unwrap();
        assert_eq!(cfg.skill_rate, 10.0);
        assert_eq!(cfg.contact_stiffness, 800.0);
        assert_eq!(cfg.timestep, 0.02);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(Config::from_json(r#"{"timestep": 0}"#).is_err());
        assert!(Config::from_json(r#"{"timestep": 0.1, "skill_rate": 15}"#).is_err());
        assert!(Config::from_json(r#"{"gains": {"stiffness": [[1,0,0],[0,0,0],[0,0,1]], "damping": [[0,0,0],[0,0,0],[0,0,0]], "inertia": [[0,0,0],[0,0,0],[0,0,0]]}}"#).is_err());
    }

    #[test]
    fn full_round_trip() {
        let cfg = Config::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), cfg);
    }
}

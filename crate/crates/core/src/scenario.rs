//! Experiment configuration documents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::horizontal::HorizontalParams;
use crate::sim::PushEvent;
use crate::terrain::{TerrainError, TerrainProfile, TerrainSpec};
use crate::vertical::{ParamError, VerticalParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Version(u32),
    #[error("invalid parameters: {0}")]
    Param(#[from] ParamError),
    #[error("invalid terrain: {0}")]
    Terrain(#[from] TerrainError),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitConfig {
    pub step_duration: f64,
    pub foot_height: f64,
    /// Landing height is the CoM height at step start minus this offset.
    pub swing_offset: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self { step_duration: 0.7, foot_height: 0.05, swing_offset: 0.715 }
    }
}

/// What a swing-foot contact in the second half of the step does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactMode {
    /// Exchange support at the contact.
    Exchange,
    /// Keep the foot on the terrain surface while it follows its reference
    /// and exchange support at the step end.
    #[default]
    Compliant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    /// Descent speed of a swing foot that has not landed by the end of the step.
    pub drop_rate: f64,
    /// Plan every this many ticks.
    pub planner_decimation: usize,
    /// Height above the stance contact below which the run counts as a fall.
    pub fall_height: f64,
    pub contact_mode: ContactMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.001, drop_rate: 0.5, planner_decimation: 1, fall_height: 0.3, contact_mode: ContactMode::Compliant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_terrain")]
    pub terrain: TerrainSpec,
    #[serde(default = "default_velocity")]
    pub velocity: [f64; 2],
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub pushes: Vec<PushEvent>,
    #[serde(default)]
    pub vertical: VerticalParams,
    #[serde(default)]
    pub horizontal: HorizontalParams,
    #[serde(default)]
    pub gait: GaitConfig,
    #[serde(default)]
    pub sim: SimConfig,
    /// Recorded with the run. The simulation itself has no random inputs.
    #[serde(default)]
    pub seed: u64,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

fn default_terrain() -> TerrainSpec {
    TerrainSpec::flat(-2.0, 40.0)
}

fn default_velocity() -> [f64; 2] {
    [0.3, 0.0]
}

fn default_duration() -> f64 {
    10.0
}

impl Default for Scenario {
    fn default() -> Self {
        let mut s = Self {
            schema_version: SCHEMA_VERSION,
            name: String::new(),
            terrain: default_terrain(),
            velocity: default_velocity(),
            duration: default_duration(),
            pushes: Vec::new(),
            vertical: VerticalParams::default(),
            horizontal: HorizontalParams::default(),
            gait: GaitConfig::default(),
            sim: SimConfig::default(),
            seed: 0,
        };
        s.sync();
        s
    }
}

impl Scenario {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: match e.path().to_string().as_str() {
                "." => "<root>".to_string(),
                p => p.to_string(),
            },
            message: e.inner().to_string(),
        })?;
        scenario.sync();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Copies scenario-level values into the planner parameters.
    pub fn sync(&mut self) {
        self.vertical.step_duration = self.gait.step_duration;
        self.horizontal.step_duration = self.gait.step_duration;
        self.horizontal.desired_velocity = self.velocity;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(self.schema_version));
        }
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid(format!("duration must be positive, got {}", self.duration));
        }
        if self.velocity.iter().any(|v| !v.is_finite()) {
            return invalid("velocity must be finite".into());
        }
        let g = &self.gait;
        if !(g.step_duration.is_finite() && g.step_duration > 0.0) {
            return invalid(format!("gait.step_duration must be positive, got {}", g.step_duration));
        }
        if !(g.foot_height.is_finite() && g.foot_height >= 0.0) || !g.swing_offset.is_finite() {
            return invalid("gait.foot_height and gait.swing_offset must be finite, foot_height non-negative".into());
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= 1e-3) {
            return invalid(format!("sim.dt must lie in (0, 0.001], got {}", s.dt));
        }
        if !(s.drop_rate.is_finite() && s.drop_rate > 0.0) {
            return invalid("sim.drop_rate must be positive".into());
        }
        if s.planner_decimation < 1 {
            return invalid("sim.planner_decimation must be at least 1".into());
        }
        if !(s.fall_height.is_finite() && s.fall_height > 0.0) {
            return invalid("sim.fall_height must be positive".into());
        }
        for (i, p) in self.pushes.iter().enumerate() {
            let ok = p.start.is_finite()
                && p.duration.is_finite()
                && p.duration > 0.0
                && p.start >= 0.0
                && p.start + p.duration <= self.duration + 1e-9
                && p.force.iter().all(|f| f.is_finite());
            if !ok {
                return invalid(format!("pushes[{i}] must have duration > 0 and lie within [0, duration]"));
            }
        }
        self.vertical.validate()?;
        self.horizontal.validate()?;
        TerrainProfile::build(&self.terrain)?;
        Ok(())
    }
}

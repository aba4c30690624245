//! Run configuration file.
//!
//! A JSON document; every field with a unit carries it in its name. Angles
//! are degrees on disk and radians in memory.

use crate::course::{CourseGenParams, ScoringParams};
use crate::linksim::LinkProfile;
use crate::mapping::MappingConfig;
use crate::mimic::MimicParams;
use crate::pilot::{PursuitGains, Strategy};
use crate::sim::SafetyConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SEED_ENV: &str = "EMBFLIGHT_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CourseSpec {
    pub seed: u64,
    pub count: usize,
    pub spacing_m: f64,
    #[serde(default)]
    pub generator: CourseGenParams,
}

impl Default for CourseSpec {
    fn default() -> Self {
        CourseSpec {
            seed: 0,
            count: 84,
            spacing_m: 40.0,
            generator: CourseGenParams::default(),
        }
    }
}

/// Where control input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSource {
    #[default]
    Hands,
    Stick,
    /// The pursuit pilot flies every phase; client input is ignored.
    Pilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseEnd {
    DurationS(f64),
    Waypoints(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    pub end: PhaseEnd,
}

impl PhaseSpec {
    pub fn duration(name: &str, seconds: f64) -> Self {
        PhaseSpec {
            name: name.into(),
            end: PhaseEnd::DurationS(seconds),
        }
    }

    pub fn waypoints(name: &str, count: usize) -> Self {
        PhaseSpec {
            name: name.into(),
            end: PhaseEnd::Waypoints(count),
        }
    }

    /// Phases flown by the pilot instead of the client.
    pub fn is_passive(&self) -> bool {
        self.name == "passive"
    }
}

pub fn default_phases() -> Vec<PhaseSpec> {
    vec![
        PhaseSpec::duration("passive", 60.0),
        PhaseSpec::duration("training", 540.0),
        PhaseSpec::waypoints("evaluation", 84),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mimic: MimicParams,
    pub mapping: MappingConfig,
    pub safety: SafetyConfig,
    pub scoring: ScoringParams,
    pub course: CourseSpec,
    pub pilot: PursuitGains,
    /// Name of the link profile between service and vehicle, or `"none"`.
    pub link: String,
    /// Extra or overriding link profiles.
    pub link_profiles: Vec<LinkProfile>,
    pub link_seed: u64,
    pub strategy: Strategy,
    pub input: InputSource,
    pub tick_hz: f64,
    /// Constant video-path delay reported to the display.
    pub display_delay_ms: f64,
    pub phases: Vec<PhaseSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mimic: MimicParams::default(),
            mapping: MappingConfig::default(),
            safety: SafetyConfig::default(),
            scoring: ScoringParams::default(),
            course: CourseSpec::default(),
            pilot: PursuitGains::default(),
            link: "3dr-915".into(),
            link_profiles: Vec::new(),
            link_seed: 0,
            strategy: Strategy::Attitude,
            input: InputSource::Hands,
            tick_hz: 50.0,
            display_delay_ms: crate::linksim::FPV_VIDEO_LATENCY_MS,
            phases: default_phases(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `EMBFLIGHT_SEED` if set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.course.seed = v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV}={v:?} is not an integer")))?;
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_hz
    }

    /// Resolves the configured link; `None` for `"none"`.
    pub fn link_profile(&self) -> Result<Option<LinkProfile>, ConfigError> {
        if self.link == "none" {
            return Ok(None);
        }
        self.link_profiles
            .iter()
            .find(|p| p.name == self.link)
            .cloned()
            .or_else(|| LinkProfile::by_name(&self.link))
            .map(Some)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown link profile {:?}", self.link)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.mimic.validate().map_err(|e| invalid(e.to_string()))?;
        self.mapping.validate().map_err(invalid)?;
        self.safety.validate().map_err(invalid)?;
        self.scoring.validate().map_err(invalid)?;
        if !(20.0..=200.0).contains(&self.tick_hz) {
            return Err(invalid(format!("tick_hz {} not in [20, 200]", self.tick_hz)));
        }
        if self.phases.is_empty() {
            return Err(invalid("at least one phase is required".into()));
        }
        if self.course.count < 2 || !(self.course.spacing_m > 0.0) {
            return Err(invalid("course needs count >= 2 and spacing_m > 0".into()));
        }
        for p in &self.link_profiles {
            p.validate().map_err(invalid)?;
        }
        self.link_profile()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert!(text.contains("cruise_speed_mps"));
        assert!(text.contains("floor_alt_m"));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.phases, cfg.phases);
        assert_eq!(back.link_profile().unwrap().unwrap().name, "3dr-915");
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"tick_hz": 100, "link": "none"}"#).unwrap();
        assert_eq!(cfg.tick_hz, 100.0);
        assert_eq!(cfg.link_profile().unwrap(), None);
        assert_eq!(cfg.course.count, 84);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig {
            tick_hz: 10.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.tick_hz = 50.0;
        cfg.phases.clear();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            link: "carrier-pigeon".into(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::IdmParams;
use crate::learn::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("`{field}` is required in {mode} mode")]
    Missing { field: &'static str, mode: Mode },
    #[error("`{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Replay,
    Signalized,
    Mixed,
    Train,
    Validate,
    Stats,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Replay => "replay",
            Mode::Signalized => "signalized",
            Mode::Mixed => "mixed",
            Mode::Train => "train",
            Mode::Validate => "validate",
            Mode::Stats => "stats",
        })
    }
}

/// Generated demand used instead of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Copy the turning counts of a bundled sample (`WGG-N`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub like: Option<String>,
    /// Directional totals `[NB, SB, EB, WB]`, used when `like` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<[u64; 4]>,
    /// Left, straight and right shares applied to every approach.
    #[serde(default = "default_mix")]
    pub turn_mix: [f64; 3],
    #[serde(default = "default_synthetic_duration")]
    pub duration: f64,
}

fn default_mix() -> [f64; 3] {
    [0.2, 0.6, 0.2]
}

fn default_synthetic_duration() -> f64 {
    crate::demand::DEFAULT_DURATION
}

fn default_penetrations() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

/// Every resolved parameter of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    /// Scenario CSV path or the name of a bundled sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// `WGG`, `WGM` or an intersection description file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intersection: Option<String>,
    pub seed: u64,
    pub dt: f64,
    /// Simulated seconds; defaults to the scenario duration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub out: PathBuf,
    pub penetration: f64,
    /// Penetration rates of the mixed-mode sweep when `penetration` is unset.
    pub penetrations: Vec<f64>,
    pub scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
    pub timestep_tol: f64,
    /// Run independent simulations of a sweep on all cores.
    pub sweep: bool,
    pub trajectory: bool,
    pub rv_zone: f64,
    pub idm: IdmParams,
    pub train: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Replay,
            scenario: None,
            intersection: None,
            seed: 0,
            dt: 0.1,
            duration: None,
            out: PathBuf::from("out"),
            penetration: 0.0,
            penetrations: default_penetrations(),
            scale: 1.0,
            policy: None,
            timestep_tol: 2.0,
            sweep: false,
            trajectory: false,
            rv_zone: crate::net::DEFAULT_CONTROL_ZONE,
            idm: IdmParams::default(),
            train: TrainConfig::default(),
            synthetic: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, message: &str| {
            Err(ConfigError::Invalid {
                field,
                message: message.to_string(),
            })
        };
        if self.scenario.is_none() && self.synthetic.is_none() {
            return Err(ConfigError::Missing {
                field: "scenario",
                mode: self.mode,
            });
        }
        if self.scenario.is_some() && self.synthetic.is_some() {
            return invalid("synthetic", "give either a scenario or a synthetic spec, not both");
        }
        if !(self.dt > 0.0) {
            return invalid("dt", "must be > 0");
        }
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return invalid("duration", "must be > 0");
            }
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return invalid("scale", "must be a finite value > 0");
        }
        if !(0.0..=1.0).contains(&self.penetration) {
            return invalid("penetration", "must lie in [0, 1]");
        }
        if self.penetrations.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("penetrations", "every rate must lie in [0, 1]");
        }
        if !(self.timestep_tol >= 0.0) {
            return invalid("timestep_tol", "must be >= 0");
        }
        if !(self.rv_zone > 0.0) {
            return invalid("rv_zone", "must be > 0");
        }
        if let Err(e) = self.idm.validate() {
            return invalid("idm", &e.to_string());
        }
        if let Err(e) = self.train.validate() {
            return invalid("train", &e.to_string());
        }
        if self.mode == Mode::Train && self.penetration == 0.0 {
            return invalid("penetration", "train mode needs robot vehicles (penetration > 0)");
        }
        if let Some(s) = &self.synthetic {
            if s.like.is_none() && s.demand.is_none() {
                return Err(ConfigError::Missing {
                    field: "synthetic.demand",
                    mode: self.mode,
                });
            }
            if !(s.duration > 0.0) {
                return invalid("synthetic.duration", "must be > 0");
            }
            if s.turn_mix.iter().any(|x| !(*x >= 0.0)) || (s.turn_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return invalid("synthetic.turn_mix", "shares must be >= 0 and sum to 1");
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }
}

/// Reads, defaults and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = RunConfig::from_toml(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml("mode = \"replay\"\nscenario = \"WGG-N\"\n").unwrap();
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.timestep_tol, 2.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn missing_scenario_names_the_field() {
        let cfg = RunConfig::from_toml("mode = \"replay\"\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("`scenario`"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("mode = \"replay\"\nscenaro = \"x\"\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rat = 1.0\n").is_err());
    }

    #[test]
    fn effective_config_reloads_identically() {
        let cfg = RunConfig {
            mode: Mode::Mixed,
            scenario: Some("WGG-AN".into()),
            duration: Some(1000.0),
            scale: 1.25,
            policy: Some(PathBuf::from("p.bin")),
            synthetic: None,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let synth = RunConfig {
            scenario: None,
            synthetic: Some(SyntheticSpec {
                like: None,
                demand: Some([1, 2, 3, 4]),
                turn_mix: default_mix(),
                duration: 600.0,
            }),
            ..cfg
        };
        assert_eq!(RunConfig::from_toml(&synth.to_toml()).unwrap(), synth);
    }
}

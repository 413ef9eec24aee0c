//! JSON run configuration. Command-line flags override every field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::executor::{CorruptionConfig, ExecConfig};
use crate::scene::CameraRig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// `builtin` or a path to a suite JSON file.
    pub suite: String,
    pub seed: u64,
    pub episodes: usize,
    pub runs: usize,
    /// Replaces the rig with the default four cameras at this resolution.
    pub resolution: Option<u32>,
    pub exec: ExecConfig,
    pub corruption: CorruptionConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            suite: "builtin".into(),
            seed: 0,
            episodes: 20,
            runs: 5,
            resolution: None,
            exec: ExecConfig::default(),
            corruption: CorruptionConfig::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// The executor settings with `resolution` applied.
    pub fn exec_config(&self) -> ExecConfig {
        let mut exec = self.exec.clone();
        if let Some(r) = self.resolution {
            exec.rig = CameraRig::default_with_resolution(r);
        }
        exec
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.runs == 0 {
            return Err("runs must be at least 1".into());
        }
        if self.resolution == Some(0) {
            return Err("resolution must be positive".into());
        }
        if let Some(d) = &self.exec.dbscan {
            d.validate().map_err(|e| e.to_string())?;
        }
        if !(0.0..=1.0).contains(&self.exec.speckle) {
            return Err("speckle must lie in [0, 1]".into());
        }
        self.exec.rig.validate().map_err(|e| e.to_string())?;
        self.corruption.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_keep_defaults() {
        let c = Config::from_json(r#"{"seed": 4, "exec": {"chunk": 1, "dbscan": null}}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.exec.chunk.size(), 1);
        assert_eq!(c.exec.dbscan, None);
        assert_eq!(c.exec.max_steps, 25);
        assert_eq!(c.runs, 5);
        c.validate().unwrap();
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(Config::from_json(r#"{"sede": 4}"#).is_err());
        assert!(Config::from_json(r#"{"exec": {"chunk": 0}}"#).is_err());
    }

    #[test]
    fn resolution_rebuilds_the_rig() {
        let c = Config { resolution: Some(64), ..Config::default() };
        assert_eq!(c.exec_config().rig, CameraRig::default_with_resolution(64));
    }
}

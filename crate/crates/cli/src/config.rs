//! Flat JSON run configuration.
//!
//! Keys are the fields of `ModelConfig` and `TrainConfig` plus `mode`,
//! `data`, `anchors` and `out`. Values are resolved as built-in defaults,
//! then the config file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use explicd_core::model::{ModelConfig, ModelKind};
use explicd_core::train::TrainConfig;
use serde_json::{Map, Value};

use crate::error::invalid;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mode: ModelKind,
    pub data: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            mode: ModelKind::Explicd,
            data: None,
            anchors: None,
            out: None,
        }
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("config structs serialize to objects"),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        let Value::Object(entries) = root else {
            return Err(invalid("config must be a JSON object"));
        };
        let mut cfg = Self::default();
        let mut model = object(serde_json::to_value(&cfg.model)?);
        let mut train = object(serde_json::to_value(&cfg.train)?);
        let path = |key: &str, v: &Value| match v {
            Value::String(s) => Ok(PathBuf::from(s)),
            _ => Err(invalid(format!("config key `{key}` must be a string"))),
        };
        for (key, value) in entries {
            if model.contains_key(&key) {
                model.insert(key, value);
            } else if train.contains_key(&key) {
                train.insert(key, value);
            } else {
                match key.as_str() {
                    "mode" => {
                        cfg.mode = value
                            .as_str()
                            .and_then(ModelKind::parse)
                            .ok_or_else(|| invalid(format!("config key `mode` must be \"explicd\" or \"blackbox\", got {value}")))?
                    }
                    "data" => cfg.data = Some(path(&key, &value)?),
                    "anchors" => cfg.anchors = Some(path(&key, &value)?),
                    "out" => cfg.out = Some(path(&key, &value)?),
                    _ => return Err(invalid(format!("unknown config key `{key}`"))),
                }
            }
        }
        cfg.model = serde_json::from_value(Value::Object(model)).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.train = serde_json::from_value(Value::Object(train)).map_err(|e| invalid(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_land_in_the_right_section() {
        let cfg = RunConfig::from_json(r#"{"tau":0.5,"lr":0.01,"mode":"blackbox","data":"d"}"#).unwrap();
        assert_eq!(cfg.model.tau, 0.5);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.mode, ModelKind::BlackBox);
        assert_eq!(cfg.data, Some(PathBuf::from("d")));
        assert_eq!(cfg.model.dim, ModelConfig::default().dim);
    }

    #[test]
    fn rejects_unknown_and_mistyped_keys() {
        assert!(RunConfig::from_json(r#"{"learning_rate":0.1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dim":"wide"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"mode":"other"}"#).is_err());
        assert!(RunConfig::from_json("[1]").is_err());
    }
}

//! Pipeline configuration: TOML file merged over defaults, then `key=value`
//! overrides addressed by dotted path.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use glsm_core::experiment::{ExperimentConfig, Variant};
use glsm_core::features::LongSource;
use glsm_core::model::Fusion;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub material_delay_ms: f64,
    /// Injected store read latency, part of the retrieval stage.
    pub fetch_delay_ms: f64,
    /// Requests synthesized from held-out rows when no stream file is given.
    pub requests: usize,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            material_delay_ms: 5.0,
            fetch_delay_ms: 1.8,
            requests: 200,
        }
    }
}

impl ServeSettings {
    pub fn material_delay(&self) -> Duration {
        Duration::from_secs_f64(self.material_delay_ms / 1e3)
    }

    pub fn fetch_delay(&self) -> Duration {
        Duration::from_secs_f64(self.fetch_delay_ms / 1e3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding every artifact.
    pub workdir: PathBuf,
    /// Fusion of the model fitted by the `train` stage.
    pub fusion: Fusion,
    pub experiment: ExperimentConfig,
    pub serve: ServeSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("glsm-work"),
            fusion: Fusion::Gate,
            experiment: ExperimentConfig::default(),
            serve: ServeSettings::default(),
        }
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn literal(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).context("empty override key")?;
    let mut cur = table;
    for p in parts {
        cur = match cur.get_mut(p) {
            Some(Value::Table(t)) => t,
            _ => bail!("unknown configuration section `{p}` in `{key}`"),
        };
    }
    if !cur.contains_key(last) {
        bail!("unknown configuration key `{key}`");
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Defaults, overlaid with `file` (if any) and then each `key=value`.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = Table::try_from(Self::default()).context("serializing default configuration")?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let parsed: Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut table, parsed);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not of the form key=value"))?;
            set_path(&mut table, k.trim(), literal(v.trim()))?;
        }
        let cfg: Self = table.try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        let s = &self.serve;
        if !(s.material_delay_ms >= 0.0 && s.fetch_delay_ms >= 0.0) || !(s.material_delay_ms + s.fetch_delay_ms).is_finite() {
            bail!("serve delays must be finite and non-negative");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// The graph-retrieval variant fitted by the `train` stage.
    pub fn train_variant(&self) -> Variant {
        Variant {
            name: self.fusion.as_str().to_string(),
            fusion: self.fusion,
            long: LongSource::Graph,
            top_k: self.experiment.top_k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_types() {
        assert_eq!(literal("3"), Value::Integer(3));
        assert_eq!(literal("0.5"), Value::Float(0.5));
        assert_eq!(literal("\"adam\""), Value::String("adam".into()));
        assert_eq!(literal("adam"), Value::String("adam".into()));
    }

    #[test]
    fn nested_override() {
        let cfg = PipelineConfig::load(None, &["experiment.train.epochs=9".into(), "fusion=concat".into()]).unwrap();
        assert_eq!(cfg.experiment.train.epochs, 9);
        assert_eq!(cfg.experiment.train.learning_rate, ExperimentConfig::default().train.learning_rate);
        assert_eq!(cfg.fusion, Fusion::Concat);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = PipelineConfig::load(None, &["experiment.train.epoch=9".into()]).unwrap_err();
        assert!(err.to_string().contains("experiment.train.epoch"), "{err}");
    }
}

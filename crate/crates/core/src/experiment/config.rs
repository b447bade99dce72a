use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::function_space::{BasisSet, LawSpec, QuadratureSpec};
use crate::metrics::MetricConfig;
use crate::plant::{PlantModel, PlantSpec};
use crate::posterior::{HypothesisGenerator, Selection};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_vertices: usize,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSpec {
    pub generator: HypothesisGenerator,
    /// Total hypothesis count `N_h`, including the injected realizable one.
    pub count: usize,
    #[serde(default)]
    pub inject_realizable: bool,
    /// Rollouts averaged per grid point when tabulating the true cost.
    #[serde(default = "one")]
    pub rollouts_per_g: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub plant: PlantSpec,
    pub law: LawSpec,
    /// Hull scale; defaults to `2^n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Masking anchor; defaults to the state-box center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    /// Stage costs; `cost.horizon` is the segment length `K`.
    pub cost: CostSpec,
    pub grid: GridSpec,
    pub hypotheses: HypothesisSpec,
    /// Number of posterior updates `T`.
    pub segments: usize,
    pub metric: MetricConfig,
    #[serde(default)]
    pub selection: Selection,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn config_err(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(config_err)?)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        match value.get("schema_version") {
            None => return Err(Error::Config("missing schema_version".into())),
            Some(v) if v.as_u64() != Some(u64::from(SCHEMA_VERSION)) => {
                return Err(Error::Config(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}")))
            }
            Some(_) => {}
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies `key.path=value` overrides before
    /// validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut value: Value = serde_json::from_str(&text).map_err(config_err)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.segments == 0 {
            return bad("segments must be at least 1".into());
        }
        if self.cost.horizon == 0 {
            return bad("cost.horizon must be at least 1".into());
        }
        if self.hypotheses.count < 2 {
            return bad("hypotheses.count must be at least 2".into());
        }
        if self.hypotheses.rollouts_per_g == 0 {
            return bad("hypotheses.rollouts_per_g must be at least 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if let HypothesisGenerator::Table { tables } = &self.hypotheses.generator {
            let expected = tables.len() + usize::from(self.hypotheses.inject_realizable);
            if expected != self.hypotheses.count {
                return bad(format!("hypotheses.count is {} but tables provide {expected}", self.hypotheses.count));
            }
        }
        self.metric.validate().map_err(|e| Error::Config(e.to_string()))?;
        let plant = PlantModel::from_spec(&self.plant).map_err(|e| Error::Config(e.to_string()))?;
        let basis = self.build_basis().map_err(|e| Error::Config(e.to_string()))?;
        if (basis.state_dim(), basis.input_dim()) != (plant.state_dim(), plant.input_dim()) {
            return bad("initial law dimensions do not match the plant".into());
        }
        if (self.cost.state_dim(), self.cost.input_dim()) != (plant.state_dim(), plant.input_dim()) {
            return bad("cost matrices do not match the plant".into());
        }
        self.cost.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn build_basis(&self) -> Result<BasisSet> {
        let law = self.law.build()?;
        let anchor = self.anchor.clone().unwrap_or_else(|| self.plant.state_box.center());
        BasisSet::new(law, anchor, self.gamma, self.plant.state_box.clone())
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        self.quadrature.unwrap_or_else(|| QuadratureSpec::auto(self.plant.state_box.dim()))
    }
}

/// Applies one `dotted.key=value` override to a JSON document. The value is
/// parsed as JSON when possible and taken as a string otherwise. Numeric path
/// segments index into arrays.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key `{path}` has an empty segment")));
    }
    let mut node = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize =
                    key.parse().map_err(|_| Error::Config(format!("`{key}` in `{path}` is not an array index")))?;
                let slot =
                    items.get_mut(idx).ok_or_else(|| Error::Config(format!("index {idx} out of range in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("cannot descend into `{key}` of `{path}`"))),
        };
    }
    unreachable!("loop returns on the last key")
}

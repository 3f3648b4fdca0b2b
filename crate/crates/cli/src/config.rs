//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.

use std::path::Path;

use anyhow::Context;
use ozsl::pipeline::EvalConfig;
use ozsl::protocol::{Holdout, SyntheticSpec};
use ozsl::vacwgan::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const SECTIONS: [&str; 5] = ["seed", "synthetic", "train", "eval", "holdout"];

/// Everything a command may read. Each command serializes the parts it
/// used next to its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub holdout: Holdout,
}

impl Default for RunConfig {
    /// Training defaults to the desk-scale preset.
    fn default() -> Self {
        RunConfig {
            seed: None,
            synthetic: SyntheticSpec::default(),
            train: TrainConfig::desk_scale(),
            eval: EvalConfig::default(),
            holdout: Holdout::default(),
        }
    }
}

fn invalid(msg: String) -> anyhow::Error {
    ozsl::Error::Invalid(msg).into()
}

/// `base` with every key present in `patch` replaced, tables merged
/// recursively.
fn merge(base: &mut toml::Value, patch: &toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&toml::Value>, section: &str) -> anyhow::Result<T> {
    let Some(patch) = patch else {
        return Ok(toml::Value::try_from(base)?.try_into()?);
    };
    if !patch.is_table() {
        return Err(invalid(format!("config section `{section}` must be a table")));
    }
    let mut value = toml::Value::try_from(base)?;
    merge(&mut value, patch);
    value.try_into().map_err(|e| invalid(format!("config section `{section}`: {e}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| invalid(format!("config: {e}")))?;
        if let Some(key) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(invalid(format!("config: unknown key `{key}` (expected one of {})", SECTIONS.join(", "))));
        }
        let defaults = RunConfig::default();
        let seed = match table.get("seed") {
            None => None,
            Some(v) => Some(
                v.as_integer()
                    .and_then(|i| u64::try_from(i).ok())
                    .ok_or_else(|| invalid("config: `seed` must be a non-negative integer".into()))?,
            ),
        };
        Ok(RunConfig {
            seed,
            synthetic: overlay(&defaults.synthetic, table.get("synthetic"), "synthetic")?,
            train: overlay(&defaults.train, table.get("train"), "train")?,
            eval: overlay(&defaults.eval, table.get("eval"), "eval")?,
            holdout: overlay(&defaults.holdout, table.get("holdout"), "holdout")?,
        })
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(ozsl::Error::from)
                    .with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }
}

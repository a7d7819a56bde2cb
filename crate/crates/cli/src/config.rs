//! Run configuration: a flat JSON object with dotted keys, merged over the
//! built-in defaults. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use semsoft::trainer::{SyntheticDatasetSpec, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelSection {
    /// Width of the hidden layer; 0 means a linear model.
    pub hidden: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PathSection {
    /// Taxonomy TSV. Empty selects the built-in 2/6/18 taxonomy.
    pub taxonomy: String,
    /// Teacher model JSON, required when `train.kd` is not `off`.
    pub teacher: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Seeds model initialization and mini-batch order.
    pub seed: u64,
    pub train: TrainConfig,
    pub data: SyntheticDatasetSpec,
    pub model: ModelSection,
    pub paths: PathSection,
}

/// Keys owned elsewhere: `seed` drives `train.seed`.
const HIDDEN_KEYS: &[&str] = &["train.seed"];

impl RunConfig {
    fn defaults(seed: u64) -> Self {
        Self {
            seed,
            train: TrainConfig::default(),
            data: SyntheticDatasetSpec::default(),
            model: ModelSection::default(),
            paths: PathSection::default(),
        }
    }

    /// Defaults, then `file`, then `--set` overrides, then an explicit seed.
    pub fn load(
        file: Option<&Path>,
        overrides: &[String],
        default_seed: u64,
        seed_flag: Option<u64>,
    ) -> Result<Self, CliError> {
        let mut flat = flatten(&serde_json::to_value(Self::defaults(default_seed)).expect("defaults serialize"));
        for key in HIDDEN_KEYS {
            flat.remove(*key);
        }

        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
            let Value::Object(obj) = serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            else {
                return Err(CliError::Usage(format!(
                    "config {} must be a JSON object",
                    path.display()
                )));
            };
            for (key, value) in obj {
                set_known(&mut flat, &key, value)?;
            }
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{item}`")))?;
            // bare words are taken as strings
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
            set_known(&mut flat, key, value)?;
        }
        if let Some(seed) = seed_flag {
            flat.insert("seed".into(), Value::from(seed));
        }
        let seed = flat["seed"].clone();
        flat.insert("train.seed".into(), seed);

        let mut cfg: RunConfig =
            serde_json::from_value(unflatten(&flat)).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.train.seed = cfg.seed;
        cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// The effective configuration as a flat dotted-key object.
    pub fn to_flat_json(&self) -> Value {
        let mut flat = flatten(&serde_json::to_value(self).expect("config serializes"));
        for key in HIDDEN_KEYS {
            flat.remove(*key);
        }
        Value::Object(flat.into_iter().collect())
    }
}

fn set_known(flat: &mut BTreeMap<String, Value>, key: &str, value: Value) -> Result<(), CliError> {
    // switching optimizer kind changes which keys exist
    let known = flat.contains_key(key) || key.starts_with("train.optimizer.");
    if !known {
        return Err(CliError::Usage(format!("unknown config key `{key}`")));
    }
    flat.insert(key.to_owned(), value);
    Ok(())
}

fn flatten(value: &Value) -> BTreeMap<String, Value> {
    fn walk(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
        match value {
            Value::Object(map) if !map.is_empty() => {
                for (k, v) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, v, out);
                }
            }
            other => {
                out.insert(prefix.to_owned(), other.clone());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", value, &mut out);
    out
}

fn unflatten(flat: &BTreeMap<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, value) in flat {
        let mut node = &mut root;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_owned(), value.clone());
            } else {
                let entry = node.entry(part.to_owned()).or_insert_with(|| Value::Object(Map::new()));
                if !entry.is_object() {
                    *entry = Value::Object(Map::new());
                }
                node = entry.as_object_mut().expect("just ensured object");
            }
        }
    }
    Value::Object(root)
}

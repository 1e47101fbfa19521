//! Fitted hyperparameters per agent, persisted as `params.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rl::{AgentParams, ModelKind, ParamName};

pub const EXPERT_KEY: &str = "expert";
pub const PARAMS_HEADER: &str = "# social-rl params v1";

/// Registry shipped with the crate.
pub const DEFAULT_PARAMS: &str = include_str!("../data/params.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub params: AgentParams,
    pub frozen: BTreeSet<ParamName>,
    pub objective: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamRegistry {
    entries: BTreeMap<String, RegistryEntry>,
}

#[derive(Debug, serde::Deserialize, serde::Serialize)]
struct Row {
    model: String,
    parameter: String,
    value: f64,
    frozen: bool,
    objective: f64,
    seed: u64,
}

impl ParamRegistry {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_PARAMS, Path::new("<default params>")).expect("shipped registry is valid")
    }

    pub fn insert(&mut self, key: &str, entry: RegistryEntry) {
        self.entries.insert(key.to_string(), entry);
    }

    pub fn get(&self, key: &str) -> Option<&RegistryEntry> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn expert(&self) -> Result<AgentParams> {
        let entry = self
            .get(EXPERT_KEY)
            .ok_or_else(|| Error::MissingParams(EXPERT_KEY.into()))?;
        entry.params.validate(ModelKind::AS_MB)?;
        Ok(entry.params)
    }

    pub fn learner(&self, model: ModelKind) -> Result<AgentParams> {
        let entry = self
            .get(model.name())
            .ok_or_else(|| Error::MissingParams(model.name().into()))?;
        entry.params.validate(model)?;
        Ok(entry.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(path, format!("cannot read parameter registry: {e}")))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut entries: BTreeMap<String, RegistryEntry> = BTreeMap::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| Error::input(path, e.to_string()))?;
            let name: ParamName = row.parameter.parse().map_err(|e: String| Error::input(path, e))?;
            if row.model != EXPERT_KEY {
                row.model
                    .parse::<ModelKind>()
                    .map_err(|_| Error::input(path, format!("unknown model `{}`", row.model)))?;
            }
            let entry = entries.entry(row.model).or_insert_with(|| RegistryEntry {
                params: AgentParams::default(),
                frozen: BTreeSet::new(),
                objective: row.objective,
                seed: row.seed,
            });
            entry.params.set(name, row.value);
            if row.frozen {
                entry.frozen.insert(name);
            }
        }
        Ok(ParamRegistry { entries })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        writeln!(buf, "{PARAMS_HEADER}")?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for (model, entry) in &self.entries {
                for name in ParamName::ALL {
                    if let Some(value) = entry.params.get(name) {
                        w.serialize(Row {
                            model: model.clone(),
                            parameter: name.as_str().to_string(),
                            value,
                            frozen: entry.frozen.contains(&name),
                            objective: entry.objective,
                            seed: entry.seed,
                        })?;
                    }
                }
            }
            w.flush()?;
        }
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

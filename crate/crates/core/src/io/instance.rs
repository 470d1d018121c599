//! Instance file format (JSON, `schema_version: 1`).
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "budget": 2.0,                 // or "inf"
//!   "ratio_lower": 0.5,
//!   "ratio_upper": 10.0,
//!   "sources": [{ "source_id": "A", "price_per_chunk": 0.8 }],
//!   "prompts": [
//!     { "prompt_id": "q1",
//!       "candidates": [{ "chunk_id": "A-1", "source_id": "A", "relevance": 0.9 }] }
//!   ],
//!   "family": { "eta": 0.5, "budget_units": 100 }   // optional
//! }
//! ```
//!
//! A candidate without `price` inherits its source's `price_per_chunk`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{build_family, AdversarialFamily, AdversaryError};
use crate::model::{errors_only, validate_instance, Budget, Candidate, Instance, PromptArrival};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: instance failed validation:\n  {}", violations.join("\n  "))]
    Validation { path: PathBuf, violations: Vec<String> },
    #[error("{path}: {source}")]
    Family {
        path: PathBuf,
        #[source]
        source: AdversaryError,
    },
}

/// `budget` field: a number or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetField {
    Amount(f64),
    Text(String),
}

impl BudgetField {
    pub fn resolve(&self) -> Result<Budget, String> {
        match self {
            BudgetField::Amount(b) => Ok(Budget::Finite(*b)),
            BudgetField::Text(s) if s == "inf" => Ok(Budget::Infinite),
            BudgetField::Text(s) => Err(format!("budget must be a number or \"inf\", got {s:?}")),
        }
    }
}

impl From<Budget> for BudgetField {
    fn from(b: Budget) -> Self {
        match b {
            Budget::Finite(v) => BudgetField::Amount(v),
            Budget::Infinite => BudgetField::Text("inf".into()),
        }
    }
}

impl Default for BudgetField {
    fn default() -> Self {
        BudgetField::Text("inf".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub source_id: String,
    pub price_per_chunk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateEntry {
    pub chunk_id: String,
    pub source_id: String,
    pub relevance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptEntry {
    pub prompt_id: String,
    #[serde(default)]
    pub candidates: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyStanza {
    pub eta: f64,
    pub budget_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub budget: BudgetField,
    pub ratio_lower: f64,
    pub ratio_upper: f64,
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
    #[serde(default)]
    pub prompts: Vec<PromptEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyStanza>,
}

impl InstanceFile {
    /// Resolves inherited prices. Does not validate core invariants.
    pub fn resolve(&self) -> Result<Instance, String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let budget = self.budget.resolve()?;
        let prices: HashMap<&str, f64> = self
            .sources
            .iter()
            .map(|s| (s.source_id.as_str(), s.price_per_chunk))
            .collect();
        let prompts = self
            .prompts
            .iter()
            .map(|p| {
                let candidates = p
                    .candidates
                    .iter()
                    .map(|c| {
                        let price = match c.price {
                            Some(price) => price,
                            None => *prices.get(c.source_id.as_str()).ok_or_else(|| {
                                format!(
                                    "prompts.{}.candidates.{}: no price and unknown source {:?}",
                                    p.prompt_id, c.chunk_id, c.source_id
                                )
                            })?,
                        };
                        Ok(Candidate::new(&c.chunk_id, &c.source_id, c.relevance, price))
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                Ok(PromptArrival::new(&p.prompt_id, candidates))
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Instance::new(prompts, budget, self.ratio_lower, self.ratio_upper))
    }

    /// File form of `instance`. Sources whose chunks share one price are
    /// listed and their candidates omit `price`; everything else is explicit.
    pub fn from_instance(instance: &Instance) -> Self {
        let mut order: Vec<&str> = Vec::new();
        let mut uniform: HashMap<&str, Option<f64>> = HashMap::new();
        for c in instance.candidates() {
            match uniform.get_mut(c.source_id.as_str()) {
                None => {
                    order.push(&c.source_id);
                    uniform.insert(&c.source_id, Some(c.price));
                }
                Some(slot) => {
                    if *slot != Some(c.price) {
                        *slot = None;
                    }
                }
            }
        }
        let sources = order
            .iter()
            .filter_map(|id| {
                uniform[id].map(|price| SourceEntry {
                    source_id: id.to_string(),
                    price_per_chunk: price,
                })
            })
            .collect();
        let prompts = instance
            .prompts
            .iter()
            .map(|p| PromptEntry {
                prompt_id: p.prompt_id.clone(),
                candidates: p
                    .candidates
                    .iter()
                    .map(|c| CandidateEntry {
                        chunk_id: c.chunk_id.clone(),
                        source_id: c.source_id.clone(),
                        relevance: c.relevance,
                        price: match uniform[c.source_id.as_str()] {
                            Some(_) => None,
                            None => Some(c.price),
                        },
                    })
                    .collect(),
            })
            .collect();
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            budget: instance.budget.into(),
            ratio_lower: instance.ratio_lower,
            ratio_upper: instance.ratio_upper,
            sources,
            prompts,
            family: None,
        }
    }
}

fn read_file(path: &Path) -> Result<InstanceFile, InstanceIoError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_file(&text, path)
}

fn parse_file(text: &str, path: &Path) -> Result<InstanceFile, InstanceIoError> {
    serde_json::from_str(text).map_err(|e| InstanceIoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates instance text; `origin` only labels errors.
pub fn parse_instance(text: &str, origin: &Path) -> Result<Instance, InstanceIoError> {
    finish(parse_file(text, origin)?, origin)
}

fn finish(file: InstanceFile, path: &Path) -> Result<Instance, InstanceIoError> {
    let instance = file.resolve().map_err(|message| InstanceIoError::Schema {
        path: path.to_path_buf(),
        message,
    })?;
    let violations = validate_instance(&instance);
    let errors = errors_only(&violations);
    if !errors.is_empty() {
        return Err(InstanceIoError::Validation {
            path: path.to_path_buf(),
            violations: errors.iter().map(|v| v.message.clone()).collect(),
        });
    }
    if let Some(first) = violations.first() {
        let more = match violations.len() - 1 {
            0 => String::new(),
            n => format!(" (and {n} similar warnings)"),
        };
        log::warn!("{}: {}{more}", path.display(), first.message);
    }
    Ok(instance)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceIoError> {
    let path = path.as_ref();
    finish(read_file(path)?, path)
}

/// Reads the `family` stanza, taking `L`/`U` from the file's ratio bounds.
pub fn load_family(path: impl AsRef<Path>) -> Result<AdversarialFamily, InstanceIoError> {
    let path = path.as_ref();
    let file = read_file(path)?;
    let stanza = file.family.ok_or_else(|| InstanceIoError::Schema {
        path: path.to_path_buf(),
        message: "missing \"family\" stanza".into(),
    })?;
    build_family(file.ratio_lower, file.ratio_upper, stanza.eta, stanza.budget_units).map_err(|source| {
        InstanceIoError::Family {
            path: path.to_path_buf(),
            source,
        }
    })
}

pub fn instance_to_string(instance: &Instance) -> String {
    let mut text = serde_json::to_string_pretty(&InstanceFile::from_instance(instance))
        .expect("instance file serializes");
    text.push('\n');
    text
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<(), InstanceIoError> {
    let path = path.as_ref();
    fs::write(path, instance_to_string(instance)).map_err(|source| InstanceIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

//! Portable model documents.
//!
//! A document is a JSON object:
//!
//! ```json
//! {
//!   "name": "gpt",
//!   "version": "1",
//!   "components": [
//!     {"name": "Gen", "behavior": "generator", "params": {"period": 10}},
//!     {"name": "Sub", "coupled": {"name": "Sub", "components": [], "couplings": []}}
//!   ],
//!   "couplings": [["Gen", "out", "Sub", "in"]],
//!   "assignment": {"Gen": "127.0.0.1:7700", "Sub": "127.0.0.1:7701"},
//!   "main_server": "127.0.0.1:7700",
//!   "frames": [{"target": "Sub", "metrics": ["throughput"], "stop": "t >= 100"}]
//! }
//! ```
//!
//! The ports of a coupled model are the ones its `EXTERNAL` couplings
//! mention. Documents carry no code; `behavior` names a registered kind.

mod elaborate;
mod partition;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupled::Coupling;
use crate::frame::FrameSpec;
use crate::message::ValueMap;

pub use elaborate::{elaborate, expand_frames, instantiate_component, validate_model, Issue};
pub use partition::{parse_address, partition_model, CrossLink, PartitionPlan};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("unsupported document version `{0}`")]
    UnsupportedVersion(String),

    #[error("model failed validation: {}", issues_text(.0))]
    ValidationFailed(Vec<Issue>),
}

fn issues_text(issues: &[Issue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default)]
    pub components: Vec<ComponentEntry>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_server: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<FrameSpec>,
}

fn default_version() -> String {
    FORMAT_VERSION.to_owned()
}

impl ModelDocument {
    pub fn new(name: impl Into<String>) -> Self {
        ModelDocument {
            name: name.into(),
            version: default_version(),
            components: Vec::new(),
            couplings: Vec::new(),
            assignment: None,
            main_server: None,
            frames: Vec::new(),
        }
    }

    pub fn component(&self, name: &str) -> Option<&ComponentEntry> {
        self.components.iter().find(|c| c.name() == name)
    }

    pub fn component_names(&self) -> Vec<&str> {
        self.components.iter().map(ComponentEntry::name).collect()
    }
}

/// One component of a document: a registered behavior or a nested model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEntry", into = "RawEntry")]
pub enum ComponentEntry {
    Atomic { name: String, behavior: String, params: ValueMap },
    Coupled { name: String, coupled: Box<ModelDocument> },
}

impl ComponentEntry {
    pub fn atomic(name: &str, behavior: &str, params: ValueMap) -> Self {
        ComponentEntry::Atomic {
            name: name.to_owned(),
            behavior: behavior.to_owned(),
            params,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ComponentEntry::Atomic { name, .. } | ComponentEntry::Coupled { name, .. } => name,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    behavior: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<ValueMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coupled: Option<Box<ModelDocument>>,
}

impl TryFrom<RawEntry> for ComponentEntry {
    type Error = String;

    fn try_from(raw: RawEntry) -> Result<Self, String> {
        match (raw.behavior, raw.coupled) {
            (Some(behavior), None) => Ok(ComponentEntry::Atomic {
                name: raw.name,
                behavior,
                params: raw.params.unwrap_or_default(),
            }),
            (None, Some(coupled)) if raw.params.is_none() => Ok(ComponentEntry::Coupled { name: raw.name, coupled }),
            (None, Some(_)) => Err(format!("component `{}`: `params` only applies to behaviors", raw.name)),
            (Some(_), Some(_)) => Err(format!(
                "component `{}` has both `behavior` and `coupled`",
                raw.name
            )),
            (None, None) => Err(format!("component `{}` needs `behavior` or `coupled`", raw.name)),
        }
    }
}

impl From<ComponentEntry> for RawEntry {
    fn from(entry: ComponentEntry) -> Self {
        match entry {
            ComponentEntry::Atomic { name, behavior, params } => RawEntry {
                name,
                behavior: Some(behavior),
                params: (!params.is_empty()).then_some(params),
                coupled: None,
            },
            ComponentEntry::Coupled { name, coupled } => RawEntry {
                name,
                behavior: None,
                params: None,
                coupled: Some(coupled),
            },
        }
    }
}

/// Parses document text. Only syntax and the format version are checked;
/// see [`validate_model`] for semantics.
pub fn parse_model(text: &str) -> Result<ModelDocument, ModelError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    check_versions(&doc)?;
    Ok(doc)
}

fn check_versions(doc: &ModelDocument) -> Result<(), ModelError> {
    if doc.version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(doc.version.clone()));
    }
    for entry in &doc.components {
        if let ComponentEntry::Coupled { coupled, .. } = entry {
            check_versions(coupled)?;
        }
    }
    Ok(())
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_owned(),
        None => msg.to_owned(),
    }
}

/// Canonical text form: pretty JSON with sorted parameter maps and a
/// trailing newline.
pub fn serialize_model(doc: &ModelDocument) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("documents serialise");
    text.push('\n');
    text
}

impl fmt::Display for ModelDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_model(self))
    }
}

//! Semantic validation and elaboration of documents into coupled models.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::atomic::AtomicSpec;
use crate::behaviors::instantiate_behavior;
use crate::coupled::{validate_coupled, Component, CoupledSpec, StructuralError, EXTERNAL};
use crate::error::Error;
use crate::frame::plan_splice;
use crate::model::partition::parse_address;
use crate::model::{ComponentEntry, ModelDocument};

/// One problem found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Issue {
    #[error("component `{component}`: unknown behavior `{kind}`")]
    UnknownBehavior { component: String, kind: String },

    #[error("component `{component}`: {reason}")]
    BadParams { component: String, reason: String },

    #[error(transparent)]
    Structural(StructuralError),

    #[error("frame `{frame}`: {reason}")]
    Frame { frame: String, reason: String },

    #[error("assignment misses component(s) {}", .0.join(", "))]
    AssignmentIncomplete(Vec<String>),

    #[error("assignment names unknown component `{0}`")]
    AssignmentUnknownComponent(String),

    #[error("cannot parse server address `{0}`")]
    AddressParseError(String),
}

impl Issue {
    fn from_kernel(component: &str, err: Error) -> Issue {
        match err {
            Error::UnknownBehavior(kind) => Issue::UnknownBehavior {
                component: component.to_owned(),
                kind,
            },
            Error::ValidationFailed(list) => Issue::Structural(
                list.into_iter()
                    .next()
                    .map(|e| StructuralError::Nested {
                        component: component.to_owned(),
                        error: Box::new(e),
                    })
                    .unwrap_or_else(|| StructuralError::UnknownComponent(component.to_owned())),
            ),
            other => Issue::BadParams {
                component: component.to_owned(),
                reason: other.to_string(),
            },
        }
    }
}

/// Splices every `frames` entry into the component and coupling lists.
/// Frame parts inherit the assignment of the component they observe.
pub fn expand_frames(doc: &ModelDocument) -> Result<ModelDocument, Vec<Issue>> {
    let mut out = doc.clone();
    out.frames.clear();
    let mut issues = Vec::new();
    for spec in &doc.frames {
        let name = spec.frame_name();
        let fail = |reason: String| Issue::Frame {
            frame: name.clone(),
            reason,
        };
        let frame = match spec.build() {
            Ok(f) => f,
            Err(e) => {
                issues.push(fail(e.to_string()));
                continue;
            }
        };
        let names: Vec<&str> = out.component_names();
        let splice = match plan_splice(&names, &out.couplings, &spec.target, &frame) {
            Ok(s) => s,
            Err(e) => {
                issues.push(fail(e.to_string()));
                continue;
            }
        };
        if let Some(assignment) = out.assignment.as_mut() {
            if let Some(server) = assignment.get(&spec.target).cloned() {
                for part in &splice.parts {
                    assignment.insert(part.name.clone(), server.clone());
                }
            }
        }
        for part in splice.parts {
            out.components
                .push(ComponentEntry::atomic(&part.name, &part.behavior, part.params));
        }
        out.couplings.extend(splice.couplings);
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(issues)
    }
}

/// Instantiates one component entry. Nested models become coupled
/// components.
fn instantiate_entry(entry: &ComponentEntry, issues: &mut Vec<Issue>) -> Option<Component> {
    match entry {
        ComponentEntry::Atomic { name, behavior, params } => match instantiate_behavior(behavior, params) {
            Ok(spec) => Some(Component::Atomic(spec.with_name(name.clone()))),
            Err(e) => {
                issues.push(Issue::from_kernel(name, e));
                None
            }
        },
        ComponentEntry::Coupled { name, coupled } => {
            let inner = expand_frames(coupled).map_err(|mut e| issues.append(&mut e)).ok()?;
            let mut spec = build_coupled(&inner, issues)?;
            spec.name = name.clone();
            Some(Component::Coupled(spec))
        }
    }
}

fn build_coupled(doc: &ModelDocument, issues: &mut Vec<Issue>) -> Option<CoupledSpec> {
    let before = issues.len();
    let components: Vec<Component> = doc
        .components
        .iter()
        .filter_map(|e| instantiate_entry(e, issues))
        .collect();
    if issues.len() > before {
        return None;
    }
    let mut spec = CoupledSpec::new(doc.name.clone());
    spec.components = components;
    spec.couplings = doc.couplings.clone();
    for c in &doc.couplings {
        if c.src_component == EXTERNAL {
            spec.input_ports.insert(c.src_port.clone());
        }
        if c.dst_component == EXTERNAL {
            spec.output_ports.insert(c.dst_port.clone());
        }
    }
    Some(spec)
}

/// Builds the coupled model a document describes, frames included.
pub fn elaborate(doc: &ModelDocument) -> Result<CoupledSpec, Vec<Issue>> {
    let doc = expand_frames(doc)?;
    let mut issues = Vec::new();
    let spec = build_coupled(&doc, &mut issues);
    match spec {
        Some(spec) if issues.is_empty() => {
            validate_coupled(&spec).map_err(|errs| errs.into_iter().map(Issue::Structural).collect::<Vec<_>>())?;
            Ok(spec)
        }
        _ => Err(issues),
    }
}

/// Full semantic check: behaviors and parameters, structure, frames and
/// server assignment. Reports every problem found.
pub fn validate_model(doc: &ModelDocument) -> Result<(), Vec<Issue>> {
    let mut issues = match elaborate(doc) {
        Ok(_) => Vec::new(),
        Err(list) => list,
    };
    issues.extend(assignment_issues(doc));
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

pub(crate) fn assignment_issues(doc: &ModelDocument) -> Vec<Issue> {
    let mut issues = Vec::new();
    if let Some(server) = &doc.main_server {
        if parse_address(server).is_err() {
            issues.push(Issue::AddressParseError(server.clone()));
        }
    }
    let Some(assignment) = &doc.assignment else {
        return issues;
    };
    let names: BTreeSet<&str> = doc.component_names().into_iter().collect();
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !assignment.contains_key(**n))
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        issues.push(Issue::AssignmentIncomplete(missing));
    }
    for (component, server) in assignment {
        if !names.contains(component.as_str()) {
            issues.push(Issue::AssignmentUnknownComponent(component.clone()));
        }
        if parse_address(server).is_err() {
            issues.push(Issue::AddressParseError(server.clone()));
        }
    }
    issues
}

/// Instantiates a single top-level entry as an atomic model, wrapping nested
/// models. Used by services that receive one component at a time.
pub fn instantiate_component(entry: &ComponentEntry) -> Result<AtomicSpec, Vec<Issue>> {
    let mut issues = Vec::new();
    let component = instantiate_entry(entry, &mut issues).ok_or(issues)?;
    match component {
        Component::Atomic(a) => Ok(a),
        Component::Coupled(c) => {
            validate_coupled(&c).map_err(|errs| errs.into_iter().map(Issue::Structural).collect::<Vec<_>>())?;
            crate::closure::digraph_to_atomic(&c).map_err(|e| vec![Issue::from_kernel(entry.name(), e)])
        }
    }
}

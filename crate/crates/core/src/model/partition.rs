//! Splitting a document across servers by its component assignment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coupled::{Coupling, EXTERNAL};
use crate::model::elaborate::{assignment_issues, expand_frames, validate_model, Issue};
use crate::model::{ModelDocument, ModelError};

/// A coupling whose endpoints live on different servers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrossLink {
    pub coupling: Coupling,
    pub src_server: String,
    pub dst_server: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    /// Server address to the sub-document of components it hosts, with
    /// the couplings among them.
    pub bundles: BTreeMap<String, ModelDocument>,
    pub cross_links: Vec<CrossLink>,
    pub main_server: String,
}

impl PartitionPlan {
    /// Server hosting `component`; `EXTERNAL` maps to the main server.
    pub fn server_of(&self, component: &str) -> Option<&str> {
        if component == EXTERNAL {
            return Some(&self.main_server);
        }
        self.bundles
            .iter()
            .find(|(_, doc)| doc.component(component).is_some())
            .map(|(addr, _)| addr.as_str())
    }

    /// Every coupling of the partitioned model, bundle-local ones first.
    pub fn all_couplings(&self) -> Vec<Coupling> {
        self.bundles
            .values()
            .flat_map(|b| b.couplings.iter().cloned())
            .chain(self.cross_links.iter().map(|l| l.coupling.clone()))
            .collect()
    }
}

/// Checks that `addr` has the form `host:port`.
#[allow(clippy::result_large_err)]
pub fn parse_address(addr: &str) -> Result<(String, u16), Issue> {
    let bad = || Issue::AddressParseError(addr.to_owned());
    let (host, port) = addr.rsplit_once(':').ok_or_else(bad)?;
    let host = host.strip_prefix('[').and_then(|h| h.strip_suffix(']')).unwrap_or(host);
    if host.is_empty() || host.chars().any(|c| c.is_whitespace() || c == '/') {
        return Err(bad());
    }
    let port: u16 = port.parse().map_err(|_| bad())?;
    Ok((host.to_owned(), port))
}

/// Groups the top-level components by assigned server. Frames are expanded
/// first, so their parts travel with the component they observe.
pub fn partition_model(doc: &ModelDocument) -> Result<PartitionPlan, ModelError> {
    validate_model(doc).map_err(ModelError::ValidationFailed)?;
    let Some(assignment) = doc.assignment.as_ref() else {
        let all = doc.component_names().into_iter().map(String::from).collect();
        return Err(ModelError::ValidationFailed(vec![Issue::AssignmentIncomplete(all)]));
    };
    let issues = assignment_issues(doc);
    if !issues.is_empty() {
        return Err(ModelError::ValidationFailed(issues));
    }
    let flat = expand_frames(doc).map_err(ModelError::ValidationFailed)?;
    let assignment = flat.assignment.clone().unwrap_or_else(|| assignment.clone());

    let main_server = doc
        .main_server
        .clone()
        .or_else(|| assignment.values().min().cloned())
        .unwrap_or_default();
    let server_of = |component: &str| -> String {
        if component == EXTERNAL {
            main_server.clone()
        } else {
            assignment[component].clone()
        }
    };

    let servers: BTreeSet<&String> = assignment.values().collect();
    let mut bundles: BTreeMap<String, ModelDocument> = servers
        .into_iter()
        .map(|s| (s.clone(), ModelDocument::new(flat.name.clone())))
        .collect();
    for entry in &flat.components {
        bundles
            .get_mut(&assignment[entry.name()])
            .expect("server collected above")
            .components
            .push(entry.clone());
    }

    let mut cross_links = Vec::new();
    for c in &flat.couplings {
        let (src, dst) = (server_of(&c.src_component), server_of(&c.dst_component));
        match bundles.get_mut(&src) {
            Some(bundle) if src == dst => bundle.couplings.push(c.clone()),
            _ => cross_links.push(CrossLink {
                coupling: c.clone(),
                src_server: src,
                dst_server: dst,
            }),
        }
    }

    Ok(PartitionPlan {
        bundles,
        cross_links,
        main_server,
    })
}

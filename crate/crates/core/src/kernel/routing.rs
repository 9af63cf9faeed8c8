use std::collections::BTreeMap;

use crate::coupled::Coupling;
use crate::message::{ContentItem, MessageBag};

/// One destination of an output port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub component: String,
    pub port: String,
}

/// Output port → destinations, for a single source component.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutingTable {
    routes: BTreeMap<String, Vec<Route>>,
}

impl RoutingTable {
    /// Table for `source` built from the couplings of its parent model.
    pub fn from_couplings<'a>(source: &str, couplings: impl IntoIterator<Item = &'a Coupling>) -> Self {
        let mut routes: BTreeMap<String, Vec<Route>> = BTreeMap::new();
        for c in couplings.into_iter().filter(|c| c.src_component == source) {
            routes.entry(c.src_port.clone()).or_default().push(Route {
                component: c.dst_component.clone(),
                port: c.dst_port.clone(),
            });
        }
        RoutingTable { routes }
    }

    pub fn routes_for(&self, port: &str) -> &[Route] {
        self.routes.get(port).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.routes.values().flatten().map(|r| r.component.as_str())
    }

    /// Renamed items per destination component, in bag order. Items on
    /// unrouted ports are dropped.
    pub fn deliveries(&self, output: &MessageBag) -> Vec<(String, ContentItem)> {
        let mut out = Vec::new();
        for item in output {
            let routes = self.routes_for(&item.port);
            if routes.is_empty() {
                log::debug!("no route for port `{}`; item dropped", item.port);
            }
            for r in routes {
                out.push((r.component.clone(), item.renamed(&r.port)));
            }
        }
        out
    }
}

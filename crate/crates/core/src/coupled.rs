//! Coupled models: components connected by coupling four-tuples.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::AtomicSpec;
use crate::error::{Error, Result};
use crate::message::MessageBag;

/// Sentinel naming the enclosing coupled model in a coupling.
pub const EXTERNAL: &str = "EXTERNAL";

/// `(source component, source port, destination component, destination port)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[String; 4]", into = "[String; 4]")]
pub struct Coupling {
    pub src_component: String,
    pub src_port: String,
    pub dst_component: String,
    pub dst_port: String,
}

impl Coupling {
    pub fn new(src: &str, src_port: &str, dst: &str, dst_port: &str) -> Self {
        Coupling {
            src_component: src.to_owned(),
            src_port: src_port.to_owned(),
            dst_component: dst.to_owned(),
            dst_port: dst_port.to_owned(),
        }
    }

    pub fn is_external_input(&self) -> bool {
        self.src_component == EXTERNAL
    }

    pub fn is_external_output(&self) -> bool {
        self.dst_component == EXTERNAL
    }
}

impl From<[String; 4]> for Coupling {
    fn from([src_component, src_port, dst_component, dst_port]: [String; 4]) -> Self {
        Coupling {
            src_component,
            src_port,
            dst_component,
            dst_port,
        }
    }
}

impl From<Coupling> for [String; 4] {
    fn from(c: Coupling) -> Self {
        [c.src_component, c.src_port, c.dst_component, c.dst_port]
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}.{} -> {}.{})",
            self.src_component, self.src_port, self.dst_component, self.dst_port
        )
    }
}

#[derive(Debug, Clone)]
pub enum Component {
    Atomic(AtomicSpec),
    Coupled(CoupledSpec),
}

impl Component {
    pub fn name(&self) -> &str {
        match self {
            Component::Atomic(a) => &a.name,
            Component::Coupled(c) => &c.name,
        }
    }

    pub fn input_ports(&self) -> &BTreeSet<String> {
        match self {
            Component::Atomic(a) => &a.input_ports,
            Component::Coupled(c) => &c.input_ports,
        }
    }

    pub fn output_ports(&self) -> &BTreeSet<String> {
        match self {
            Component::Atomic(a) => &a.output_ports,
            Component::Coupled(c) => &c.output_ports,
        }
    }
}

impl From<AtomicSpec> for Component {
    fn from(a: AtomicSpec) -> Self {
        Component::Atomic(a)
    }
}

impl From<CoupledSpec> for Component {
    fn from(c: CoupledSpec) -> Self {
        Component::Coupled(c)
    }
}

/// Hierarchical composition of components.
#[derive(Debug, Clone, Default)]
pub struct CoupledSpec {
    pub name: String,
    pub input_ports: BTreeSet<String>,
    pub output_ports: BTreeSet<String>,
    pub components: Vec<Component>,
    pub couplings: Vec<Coupling>,
}

impl CoupledSpec {
    pub fn new(name: impl Into<String>) -> Self {
        CoupledSpec {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_component(mut self, component: impl Into<Component>) -> Self {
        self.components.push(component.into());
        self
    }

    pub fn with_coupling(mut self, src: &str, src_port: &str, dst: &str, dst_port: &str) -> Self {
        self.couplings.push(Coupling::new(src, src_port, dst, dst_port));
        self
    }

    pub fn with_input(mut self, port: &str) -> Self {
        self.input_ports.insert(port.to_owned());
        self
    }

    pub fn with_output(mut self, port: &str) -> Self {
        self.output_ports.insert(port.to_owned());
        self
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name() == name)
    }

    pub fn component_names(&self) -> Vec<&str> {
        self.components.iter().map(Component::name).collect()
    }

    /// Couplings leaving `src` (which may be [`EXTERNAL`]).
    pub fn couplings_from<'a>(&'a self, src: &'a str) -> impl Iterator<Item = &'a Coupling> + 'a {
        self.couplings.iter().filter(move |c| c.src_component == src)
    }
}

/// A structural defect found by [`validate_coupled`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructuralError {
    #[error("duplicate component name `{0}`")]
    DuplicateComponent(String),
    #[error("reserved or malformed component name `{0}`")]
    ReservedName(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("port `{port}` is not declared on `{component}`")]
    UndeclaredPort { component: String, port: String },
    #[error("port `{port}` of `{component}` used against its direction in {coupling}")]
    PortDirectionError {
        component: String,
        port: String,
        coupling: Coupling,
    },
    #[error("coupling {0} has an empty field")]
    EmptyCouplingField(Coupling),
    #[error("coupling {0} connects the model's input straight to its output")]
    DirectFeedthrough(Coupling),
    #[error("in `{component}`: {error}")]
    Nested {
        component: String,
        error: Box<StructuralError>,
    },
}

/// Checks names, coupling endpoints and port directions, recursing into
/// nested coupled components. Reports every violation found.
pub fn validate_coupled(spec: &CoupledSpec) -> std::result::Result<(), Vec<StructuralError>> {
    let mut errors = Vec::new();
    let mut seen = HashSet::new();

    for component in &spec.components {
        let name = component.name();
        if !valid_component_name(name) {
            errors.push(StructuralError::ReservedName(name.to_owned()));
        }
        if !seen.insert(name) {
            errors.push(StructuralError::DuplicateComponent(name.to_owned()));
        }
        if let Component::Coupled(inner) = component {
            if let Err(nested) = validate_coupled(inner) {
                errors.extend(nested.into_iter().map(|error| StructuralError::Nested {
                    component: name.to_owned(),
                    error: Box::new(error),
                }));
            }
        }
    }

    for coupling in &spec.couplings {
        check_coupling(spec, coupling, &mut errors);
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

pub(crate) fn valid_component_name(name: &str) -> bool {
    !name.is_empty() && name != EXTERNAL && !name.contains('@') && !name.contains(char::is_whitespace)
}

fn check_coupling(spec: &CoupledSpec, c: &Coupling, errors: &mut Vec<StructuralError>) {
    if [&c.src_component, &c.src_port, &c.dst_component, &c.dst_port]
        .iter()
        .any(|f| f.is_empty())
    {
        errors.push(StructuralError::EmptyCouplingField(c.clone()));
        return;
    }
    if c.is_external_input() && c.is_external_output() {
        errors.push(StructuralError::DirectFeedthrough(c.clone()));
        return;
    }

    // Source side: an output port of a child, or an input port of the model.
    if c.is_external_input() {
        if !spec.input_ports.contains(&c.src_port) {
            errors.push(direction_or_undeclared(
                &spec.name,
                &c.src_port,
                spec.output_ports.contains(&c.src_port),
                c,
            ));
        }
    } else {
        match spec.component(&c.src_component) {
            None => errors.push(StructuralError::UnknownComponent(c.src_component.clone())),
            Some(comp) if !comp.output_ports().contains(&c.src_port) => {
                errors.push(direction_or_undeclared(
                    comp.name(),
                    &c.src_port,
                    comp.input_ports().contains(&c.src_port),
                    c,
                ))
            }
            Some(_) => {}
        }
    }

    // Destination side: an input port of a child, or an output port of the model.
    if c.is_external_output() {
        if !spec.output_ports.contains(&c.dst_port) {
            errors.push(direction_or_undeclared(
                &spec.name,
                &c.dst_port,
                spec.input_ports.contains(&c.dst_port),
                c,
            ));
        }
    } else {
        match spec.component(&c.dst_component) {
            None => errors.push(StructuralError::UnknownComponent(c.dst_component.clone())),
            Some(comp) if !comp.input_ports().contains(&c.dst_port) => {
                errors.push(direction_or_undeclared(
                    comp.name(),
                    &c.dst_port,
                    comp.output_ports().contains(&c.dst_port),
                    c,
                ))
            }
            Some(_) => {}
        }
    }
}

fn direction_or_undeclared(component: &str, port: &str, wrong_direction: bool, c: &Coupling) -> StructuralError {
    if wrong_direction {
        StructuralError::PortDirectionError {
            component: component.to_owned(),
            port: port.to_owned(),
            coupling: c.clone(),
        }
    } else {
        StructuralError::UndeclaredPort {
            component: component.to_owned(),
            port: port.to_owned(),
        }
    }
}

/// Routes the output of `src_component` along the couplings of `coupled`.
///
/// Returns one bag per destination, ordered by destination name. Deliveries
/// to the model's own output appear under [`EXTERNAL`]. Items on ports with
/// no coupling are dropped.
pub fn route(coupled: &CoupledSpec, src_component: &str, output: &MessageBag) -> Result<Vec<(String, MessageBag)>> {
    let declared = if src_component == EXTERNAL {
        &coupled.input_ports
    } else {
        coupled
            .component(src_component)
            .ok_or_else(|| Error::UnknownComponent(src_component.to_owned()))?
            .output_ports()
    };

    let mut deliveries: BTreeMap<String, MessageBag> = BTreeMap::new();
    for item in output {
        if !declared.contains(&item.port) {
            return Err(Error::UndeclaredPort {
                component: src_component.to_owned(),
                port: item.port.clone(),
            });
        }
        let mut routed = false;
        for c in coupled
            .couplings_from(src_component)
            .filter(|c| c.src_port == item.port)
        {
            routed = true;
            deliveries
                .entry(c.dst_component.clone())
                .or_default()
                .push(item.renamed(&c.dst_port));
        }
        if !routed {
            log::debug!("dropping unconnected output {}.{}", src_component, item.port);
        }
    }
    Ok(deliveries.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviors::instantiate_behavior;
    use crate::message::ContentItem;
    use serde_json::json;

    fn gpt() -> CoupledSpec {
        let gen = instantiate_behavior("generator", json!({"period": 10}).as_object().unwrap())
            .unwrap()
            .with_name("Gen");
        let proc_ = instantiate_behavior("processor", json!({"service_time": 2.5}).as_object().unwrap())
            .unwrap()
            .with_name("Proc");
        let trans = instantiate_behavior("transducer", json!({"observation_time": 100}).as_object().unwrap())
            .unwrap()
            .with_name("Trans");
        CoupledSpec::new("GPT")
            .with_output("report")
            .with_component(gen)
            .with_component(proc_)
            .with_component(trans)
            .with_coupling("Gen", "out", "Proc", "in")
            .with_coupling("Gen", "out", "Trans", "arrived")
            .with_coupling("Proc", "out", "Trans", "solved")
            .with_coupling("Trans", "report", EXTERNAL, "report")
    }

    #[test]
    fn gpt_validates() {
        assert_eq!(validate_coupled(&gpt()), Ok(()));
    }

    #[test]
    fn reports_unknown_component() {
        let spec = gpt().with_coupling("Ghost", "out", "Proc", "in");
        assert_eq!(
            validate_coupled(&spec),
            Err(vec![StructuralError::UnknownComponent("Ghost".into())])
        );
    }

    #[test]
    fn reports_input_port_used_as_source() {
        let spec = gpt().with_coupling("Proc", "in", "Trans", "solved");
        let errors = validate_coupled(&spec).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert!(matches!(errors[0], StructuralError::PortDirectionError { .. }));
    }

    #[test]
    fn reports_every_violation() {
        let mut spec = gpt()
            .with_coupling("Ghost", "out", "Proc", "in")
            .with_coupling("Gen", "nope", "Trans", "arrived");
        let dup = spec.components[0].clone();
        spec.components.push(dup);
        let errors = validate_coupled(&spec).unwrap_err();
        assert_eq!(errors.len(), 3, "{errors:?}");
    }

    #[test]
    fn route_single_coupling() {
        let spec = CoupledSpec {
            couplings: vec![Coupling::new("Gen", "out", "Proc", "in")],
            ..gpt()
        };
        let out = route(&spec, "Gen", &MessageBag::single("out", 1)).unwrap();
        assert_eq!(out, vec![("Proc".to_owned(), MessageBag::single("in", 1))]);
    }

    #[test]
    fn route_fans_out() {
        let out = route(&gpt(), "Gen", &MessageBag::single("out", 1)).unwrap();
        assert_eq!(
            out,
            vec![
                ("Proc".to_owned(), MessageBag::single("in", 1)),
                ("Trans".to_owned(), MessageBag::single("arrived", 1)),
            ]
        );
    }

    #[test]
    fn route_drops_unwired_and_rejects_undeclared() {
        let spec = gpt().with_component(
            instantiate_behavior("buffer", json!({"delay": 1}).as_object().unwrap())
                .unwrap()
                .with_name("Buf"),
        );
        assert!(route(&spec, "Buf", &MessageBag::single("out", 5)).unwrap().is_empty());
        assert!(matches!(
            route(&spec, "Gen", &MessageBag::single("unwired", 5)),
            Err(Error::UndeclaredPort { .. })
        ));
        assert!(matches!(
            route(&spec, "Nobody", &MessageBag::new()),
            Err(Error::UnknownComponent(_))
        ));
    }

    #[test]
    fn route_surfaces_external_output() {
        let report = json!({"arrived": 1});
        let out = route(&gpt(), "Trans", &MessageBag::single("report", report.clone())).unwrap();
        assert_eq!(
            out,
            vec![(EXTERNAL.to_owned(), [ContentItem::new("report", report)].into_iter().collect())]
        );
    }

    #[test]
    fn coupling_serialises_as_four_strings() {
        let c = Coupling::new("Gen", "out", "Proc", "in");
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"["Gen","out","Proc","in"]"#);
    }
}

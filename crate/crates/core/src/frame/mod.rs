//! Experimental frames and test agents.
//!
//! A frame is a small coupled model: an optional stimulus generator, a
//! transducer that turns observed traffic into metrics, and an acceptor that
//! asks the run to stop. A test agent adds an observer that taps the
//! couplings of one component and relays the traffic to the frame.
//!
//! Frames attach by splicing flat components into the parent model, named
//! `{frame}_observer`, `{frame}_generator`, `{frame}_transducer` and
//! `{frame}_acceptor`. Metrics leave the model on the `metrics` port and the
//! stop request on the reserved `stop` port.

mod agents;
mod rule;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::atomic::AtomicSpec;
use crate::behaviors::{instantiate_behavior, BehaviorRegistry};
use crate::coupled::{CoupledSpec, Coupling, EXTERNAL};
use crate::error::Error;
use crate::kernel::{Detail, RecordKind, RunSummary, TraceRecord, STOP_PORT};
use crate::message::{MessageBag, Value, ValueMap};
use crate::time::SimTime;

pub use agents::{Acceptor, FrameTransducer, Observer, Tally, ARRIVED, METRICS, OBSERVED_IN, OBSERVED_OUT, SOLVED};
pub use rule::{Clause, Cmp, StopRule, Term};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("bad stop rule: {0}")]
    BadStopRule(String),

    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("port `{port}` of `{component}` does not fit the frame")]
    PortMismatch { component: String, port: String },

    #[error("frame component `{0}` clashes with an existing component")]
    NameClash(String),

    #[error(transparent)]
    Kernel(#[from] Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Count,
    Throughput,
    MeanTurnaround,
    MaxTurnaround,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Count, Metric::Throughput, Metric::MeanTurnaround, Metric::MaxTurnaround];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Count => "count",
            Metric::Throughput => "throughput",
            Metric::MeanTurnaround => "mean_turnaround",
            Metric::MaxTurnaround => "max_turnaround",
        }
    }

    pub fn parse(name: &str) -> Result<Metric, FrameError> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| FrameError::UnknownMetric(name.to_owned()))
    }
}

/// Stimulus source: a registered behavior kind driving one input port of
/// the observed component from its `out` port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub behavior: String,
    #[serde(default)]
    pub params: ValueMap,
    #[serde(default = "default_stimulus_port")]
    pub port: String,
}

fn default_stimulus_port() -> String {
    "in".to_owned()
}

/// The `frames` block of a model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<Stimulus>,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
}

impl FrameSpec {
    pub fn frame_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}_ef", self.target))
    }

    pub fn build(&self) -> Result<ExperimentalFrame, FrameError> {
        build_frame(&self.frame_name(), self.stimulus.as_ref(), &self.metrics, self.stop.as_deref())
    }
}

/// Descriptor of one frame component, enough to recreate it from the
/// behavior registry.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePart {
    pub name: String,
    pub behavior: String,
    pub params: ValueMap,
}

#[derive(Debug, Clone)]
pub struct ExperimentalFrame {
    pub name: String,
    pub generator: Option<AtomicSpec>,
    pub transducer: Option<AtomicSpec>,
    pub acceptor: AtomicSpec,
    pub metrics: Vec<Metric>,
    pub stop_rule: Option<StopRule>,
    /// Port the stimulus drives on the observed component.
    pub stimulus_port: Option<String>,
    /// Couplings among the frame parts and to the frame's own ports
    /// (`arrived`, `solved` in; `stimulus`, `metrics`, `stop` out).
    pub wiring: Vec<Coupling>,
    parts: Vec<FramePart>,
}

impl ExperimentalFrame {
    pub fn parts(&self) -> &[FramePart] {
        &self.parts
    }

    pub fn observer_name(&self) -> String {
        format!("{}_observer", self.name)
    }

    /// The frame as a standalone coupled model.
    pub fn to_coupled(&self) -> CoupledSpec {
        let mut spec = CoupledSpec::new(self.name.clone());
        for part in [self.generator.as_ref(), self.transducer.as_ref(), Some(&self.acceptor)]
            .into_iter()
            .flatten()
        {
            spec = spec.with_component(part.clone());
        }
        spec.couplings = self.wiring.clone();
        for c in &self.wiring {
            if c.is_external_input() {
                spec = spec.with_input(&c.src_port);
            }
            if c.is_external_output() {
                spec = spec.with_output(&c.dst_port);
            }
        }
        spec
    }
}

/// Builds a frame from a stimulus, a metric list and an optional stop rule.
pub fn build_frame(
    name: &str,
    stimulus: Option<&Stimulus>,
    metrics: &[String],
    stop_rule: Option<&str>,
) -> Result<ExperimentalFrame, FrameError> {
    let mut wanted = BTreeSet::new();
    for m in metrics {
        wanted.insert(Metric::parse(m)?);
    }
    let metrics: Vec<Metric> = wanted.into_iter().collect();
    let rule = stop_rule.map(StopRule::parse).transpose()?;
    let with_transducer = !metrics.is_empty() || rule.as_ref().is_some_and(StopRule::uses_metrics);

    let gen_name = format!("{name}_generator");
    let tr_name = format!("{name}_transducer");
    let acc_name = format!("{name}_acceptor");
    let mut parts = Vec::new();
    let mut wiring = Vec::new();

    let generator = match stimulus {
        Some(s) => {
            let spec = instantiate_behavior(&s.behavior, &s.params)?.with_name(gen_name.clone());
            if !spec.output_ports.contains("out") {
                return Err(FrameError::PortMismatch {
                    component: gen_name,
                    port: "out".into(),
                });
            }
            parts.push(FramePart {
                name: gen_name.clone(),
                behavior: s.behavior.clone(),
                params: s.params.clone(),
            });
            wiring.push(Coupling::new(&gen_name, "out", EXTERNAL, "stimulus"));
            Some(spec)
        }
        None => None,
    };

    let transducer = if with_transducer {
        let params = to_map(json!({
            "frame": name,
            "metrics": metrics.iter().map(|m| m.name()).collect::<Vec<_>>(),
        }));
        let spec = instantiate_behavior("ef_transducer", &params)?.with_name(tr_name.clone());
        parts.push(FramePart {
            name: tr_name.clone(),
            behavior: "ef_transducer".into(),
            params,
        });
        wiring.push(Coupling::new(EXTERNAL, ARRIVED, &tr_name, ARRIVED));
        wiring.push(Coupling::new(EXTERNAL, SOLVED, &tr_name, SOLVED));
        wiring.push(Coupling::new(&tr_name, METRICS, &acc_name, METRICS));
        wiring.push(Coupling::new(&tr_name, METRICS, EXTERNAL, METRICS));
        Some(spec)
    } else {
        None
    };

    let mut acc_params = to_map(json!({ "frame": name }));
    if let Some(r) = &rule {
        acc_params.insert("rule".into(), Value::String(r.text().to_owned()));
    }
    let acceptor = instantiate_behavior("ef_acceptor", &acc_params)?.with_name(acc_name.clone());
    parts.push(FramePart {
        name: acc_name.clone(),
        behavior: "ef_acceptor".into(),
        params: acc_params,
    });
    wiring.push(Coupling::new(&acc_name, STOP_PORT, EXTERNAL, STOP_PORT));

    Ok(ExperimentalFrame {
        name: name.to_owned(),
        generator,
        transducer,
        acceptor,
        metrics,
        stop_rule: rule,
        stimulus_port: stimulus.map(|s| s.port.clone()),
        wiring,
        parts,
    })
}

fn to_map(v: Value) -> ValueMap {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("object literal"),
    }
}

/// Components and couplings a test agent adds to a parent model.
#[derive(Debug, Clone, PartialEq)]
pub struct Splice {
    pub parts: Vec<FramePart>,
    pub couplings: Vec<Coupling>,
}

/// Plans the splice of `frame` onto `target` given the parent's existing
/// component names and couplings. The original couplings stay as they are;
/// the observer only receives copies of the traffic.
pub fn plan_splice(
    names: &[&str],
    couplings: &[Coupling],
    target: &str,
    frame: &ExperimentalFrame,
) -> Result<Splice, FrameError> {
    if !names.contains(&target) {
        return Err(FrameError::UnknownComponent(target.to_owned()));
    }
    let observer = frame.observer_name();
    let mut parts = vec![FramePart {
        name: observer.clone(),
        behavior: "observer".into(),
        params: ValueMap::new(),
    }];
    parts.extend(frame.parts.iter().cloned());
    for p in &parts {
        if names.contains(&p.name.as_str()) {
            return Err(FrameError::NameClash(p.name.clone()));
        }
    }

    let mut added = Vec::new();
    for c in &frame.wiring {
        if c.is_external_input() {
            // Frame inputs are fed by the observer.
            added.push(Coupling::new(&observer, &c.src_port, &c.dst_component, &c.dst_port));
        } else if c.dst_component == EXTERNAL && c.dst_port == "stimulus" {
            let port = frame.stimulus_port.as_deref().unwrap_or("in");
            added.push(Coupling::new(&c.src_component, &c.src_port, target, port));
        } else {
            added.push(c.clone());
        }
    }

    let into_target = couplings.iter().chain(added.iter()).filter(|c| c.dst_component == target);
    let taps_in: Vec<Coupling> = into_target
        .map(|c| Coupling::new(&c.src_component, &c.src_port, &observer, OBSERVED_IN))
        .collect();
    let out_ports: BTreeSet<&str> = couplings
        .iter()
        .filter(|c| c.src_component == target)
        .map(|c| c.src_port.as_str())
        .collect();
    let taps_out = out_ports
        .into_iter()
        .map(|p| Coupling::new(target, p, &observer, OBSERVED_OUT));

    let mut all: Vec<Coupling> = taps_in.into_iter().chain(taps_out).collect();
    all.extend(added);
    dedup(&mut all);
    Ok(Splice { parts, couplings: all })
}

fn dedup(couplings: &mut Vec<Coupling>) {
    let mut seen = BTreeSet::new();
    couplings.retain(|c| seen.insert(c.clone()));
}

/// Returns a copy of `model` with a test agent observing `component`.
pub fn attach_observer(model: &CoupledSpec, component: &str, frame: &ExperimentalFrame) -> Result<CoupledSpec, FrameError> {
    let names = model.component_names();
    let target = model
        .component(component)
        .ok_or_else(|| FrameError::UnknownComponent(component.to_owned()))?;
    if let Some(port) = &frame.stimulus_port {
        if !target.input_ports().contains(port) {
            return Err(FrameError::PortMismatch {
                component: component.to_owned(),
                port: port.clone(),
            });
        }
    }
    let splice = plan_splice(&names, &model.couplings, component, frame)?;

    let mut out = model.clone();
    for part in &splice.parts {
        let spec = instantiate_behavior(&part.behavior, &part.params)?.with_name(part.name.clone());
        out = out.with_component(spec);
    }
    for c in splice.couplings {
        if c.is_external_output() {
            out.output_ports.insert(c.dst_port.clone());
        }
        out.couplings.push(c);
    }
    Ok(out)
}

/// Metric values for a tally observed up to `now`. `count` expands to the
/// `arrived`, `solved` and `unmatched` counters.
pub fn transducer_metrics(tally: &Tally, now: SimTime) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for name in &tally.metrics {
        match Metric::parse(name) {
            Ok(Metric::Count) => {
                out.insert("arrived".into(), json!(tally.arrived));
                out.insert("solved".into(), json!(tally.solved));
                out.insert("unmatched".into(), json!(tally.unmatched));
            }
            Ok(Metric::Throughput) => {
                out.insert("throughput".into(), json!(tally.throughput(now)));
            }
            Ok(Metric::MeanTurnaround) => {
                out.insert("mean_turnaround".into(), json!(tally.mean_turnaround()));
            }
            Ok(Metric::MaxTurnaround) => {
                out.insert("max_turnaround".into(), json!(tally.max_turnaround));
            }
            Err(_) => {}
        }
    }
    out
}

/// Recomputes a frame tally from the observer's output records in a trace.
pub fn batch_tally(records: &[TraceRecord], observer: &str, frame: &str, metrics: &[String]) -> Tally {
    let mut tr = FrameTransducer::new(frame, metrics.to_vec());
    let mut rows: Vec<&TraceRecord> = records
        .iter()
        .filter(|r| r.component == observer && r.kind == RecordKind::Output)
        .collect();
    rows.sort_by(|a, b| a.merge_cmp(b));
    for r in rows {
        if let Detail::Output { items } = &r.detail {
            let bag: MessageBag = items.iter().cloned().collect();
            tr.record(r.t, &bag);
        }
    }
    tr.tally().clone()
}

/// Latest metrics of every frame that published any, evaluated at the
/// run's final time.
pub fn frame_reports(summary: &RunSummary) -> BTreeMap<String, BTreeMap<String, Value>> {
    let mut latest: BTreeMap<String, Tally> = BTreeMap::new();
    for ev in &summary.external {
        for v in ev.bag.on_port(METRICS) {
            if let Some(t) = Tally::from_value(v) {
                let keep = latest
                    .get(&t.frame)
                    .is_none_or(|old| (old.arrived + old.solved) <= (t.arrived + t.solved));
                if keep {
                    latest.insert(t.frame.clone(), t);
                }
            }
        }
    }
    latest
        .into_iter()
        .map(|(name, tally)| (name, transducer_metrics(&tally, summary.final_t)))
        .collect()
}

pub(crate) fn register_frame_behaviors(reg: &mut BehaviorRegistry) {
    reg.register("observer", Observer::factory);
    reg.register("ef_transducer", FrameTransducer::factory);
    reg.register("ef_acceptor", Acceptor::factory);
}

use std::collections::BTreeMap;

use crate::atomic::{dispatch, lambda_if_imminent, AtomicSpec, TransitionKind};
use crate::coupled::EXTERNAL;
use crate::error::{Error, Result};
use crate::kernel::routing::RoutingTable;
use crate::kernel::trace::TraceRecord;
use crate::message::{ContentItem, MessageBag};
use crate::time::{next_tn, SimTime};

/// Outcome of [`Simulator::apply_delt_func`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeltOutcome {
    pub kind: TransitionKind,
    pub elapsed: SimTime,
    pub tn: SimTime,
    pub record: Option<TraceRecord>,
}

/// A simulator wrapping one atomic model, identified as
/// `ComponentName@clientAddress`.
#[derive(Debug, Clone)]
pub struct Simulator {
    id: String,
    model: AtomicSpec,
    tl: SimTime,
    tn: SimTime,
    pending: Option<MessageBag>,
    peers: BTreeMap<String, String>,
    routing: RoutingTable,
    last_output: MessageBag,
    // Set by apply_delt_func, cleared by compute_input_output: content
    // arriving while sealed would be observed after this cycle's transition.
    sealed: bool,
    delivered: u64,
}

pub fn simulator_id(component: &str, client: &str) -> String {
    format!("{component}@{client}")
}

impl Simulator {
    pub fn new(model: AtomicSpec, client: &str) -> Self {
        Simulator {
            id: simulator_id(&model.name, client),
            model,
            tl: SimTime::ZERO,
            tn: SimTime::INFINITY,
            pending: None,
            peers: BTreeMap::new(),
            routing: RoutingTable::default(),
            last_output: MessageBag::new(),
            sealed: false,
            delivered: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.model.name
    }

    pub fn model(&self) -> &AtomicSpec {
        &self.model
    }

    pub fn tl(&self) -> SimTime {
        self.tl
    }

    pub fn next_tn(&self) -> SimTime {
        self.tn
    }

    /// Pending input, or `None` before initialisation.
    pub fn pending(&self) -> Option<&MessageBag> {
        self.pending.as_ref()
    }

    pub fn peers(&self) -> &BTreeMap<String, String> {
        &self.peers
    }

    pub fn routing(&self) -> &RoutingTable {
        &self.routing
    }

    pub fn last_output(&self) -> &MessageBag {
        &self.last_output
    }

    /// Number of items accepted through `put_content_on_simulator` so far.
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Opens the simulator for deliveries of a new cycle.
    pub fn begin_cycle(&mut self) {
        self.sealed = false;
    }

    pub fn set_routing(&mut self, routing: RoutingTable) {
        self.routing = routing;
    }

    /// Stores the component-name → simulator-id map used to resolve routes.
    pub fn set_simulators(&mut self, peers: BTreeMap<String, String>) {
        self.peers = peers;
    }

    pub fn initialize(&mut self, t0: SimTime) {
        self.model.behavior.init();
        self.tl = t0;
        self.tn = next_tn(t0, self.model.behavior.time_advance());
        self.pending = Some(MessageBag::new());
        self.last_output = MessageBag::new();
        self.sealed = false;
    }

    /// Output phase. Buffers and returns the model output when imminent at
    /// `t`; the record is present only for a nonempty output.
    pub fn compute_input_output(&mut self, t: SimTime, cycle: u64) -> Result<(MessageBag, Option<TraceRecord>)> {
        if self.pending.is_none() {
            return Err(Error::MissingInput(self.id.clone()));
        }
        self.sealed = false;
        let output = lambda_if_imminent(&self.model, t, self.tn).map_err(|_| Error::TimeContractViolation {
            component: self.id.clone(),
            t,
            tl: self.tl,
            tn: self.tn,
        })?;
        if let Some(bad) = output.iter().find(|i| !self.model.output_ports.contains(&i.port)) {
            return Err(Error::UndeclaredPort {
                component: self.model.name.clone(),
                port: bad.port.clone(),
            });
        }
        self.last_output = output.clone();
        let record = (!output.is_empty()).then(|| TraceRecord::output(t, cycle, self.name(), &output));
        Ok((output, record))
    }

    /// Routes `output` and hands each renamed item to `sink` together with
    /// the recipient's simulator id ([`EXTERNAL`] for the parent's output).
    /// Returns the number of deliveries.
    pub fn send_messages(
        &self,
        output: &MessageBag,
        sink: &mut dyn FnMut(&str, ContentItem) -> Result<()>,
    ) -> Result<usize> {
        let mut sent = 0;
        for (component, item) in self.routing.deliveries(output) {
            if component == EXTERNAL {
                sink(EXTERNAL, item)?;
            } else {
                let peer = self.peers.get(&component).ok_or_else(|| Error::RoutingUnresolvable {
                    component: self.id.clone(),
                    target: component.clone(),
                })?;
                sink(peer, item)?;
            }
            sent += 1;
        }
        Ok(sent)
    }

    /// The only path by which content enters a simulator.
    pub fn put_content_on_simulator(&mut self, item: ContentItem) -> Result<()> {
        if !self.model.input_ports.contains(&item.port) {
            return Err(Error::UndeclaredPort {
                component: self.model.name.clone(),
                port: item.port,
            });
        }
        if self.sealed {
            return Err(Error::BarrierViolation(self.id.clone()));
        }
        let pending = self
            .pending
            .as_mut()
            .ok_or_else(|| Error::MissingInput(self.id.clone()))?;
        pending.push(item);
        self.delivered += 1;
        Ok(())
    }

    /// Transition phase.
    pub fn apply_delt_func(&mut self, t: SimTime, cycle: u64) -> Result<DeltOutcome> {
        let d = dispatch(&mut self.model, &mut self.pending, t, self.tl, self.tn).map_err(|e| match e {
            Error::MissingInput(_) => Error::MissingInput(self.id.clone()),
            Error::TimeContractViolation { t, tl, tn, .. } => Error::TimeContractViolation {
                component: self.id.clone(),
                t,
                tl,
                tn,
            },
            other => other,
        })?;
        self.sealed = true;
        self.tl = d.tl;
        self.tn = d.tn;
        let record = (d.kind != TransitionKind::NoOp)
            .then(|| TraceRecord::transition(t, cycle, self.name(), d.kind, d.elapsed));
        Ok(DeltOutcome {
            kind: d.kind,
            elapsed: d.elapsed,
            tn: d.tn,
            record,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviors::instantiate_behavior;
    use crate::coupled::Coupling;
    use serde_json::json;

    fn t(v: f64) -> SimTime {
        SimTime::new(v).unwrap()
    }

    fn sim(kind: &str, name: &str, params: serde_json::Value) -> Simulator {
        let spec = instantiate_behavior(kind, params.as_object().unwrap())
            .unwrap()
            .with_name(name);
        Simulator::new(spec, "local")
    }

    #[test]
    fn initialize_sets_tn() {
        let mut g = sim("generator", "Gen", json!({"period": 10}));
        g.initialize(t(0.0));
        assert_eq!(g.next_tn(), t(10.0));
        g.initialize(t(5.0));
        assert_eq!(g.next_tn(), t(15.0));
        let mut p = sim("processor", "Proc", json!({"service_time": 2.5}));
        p.initialize(t(0.0));
        assert!(p.next_tn().is_infinite());
        assert_eq!(p.id(), "Proc@local");
    }

    #[test]
    fn compute_input_output_only_when_imminent() {
        let mut g = sim("generator", "Gen", json!({"period": 10}));
        g.initialize(t(0.0));
        let (out, rec) = g.compute_input_output(t(3.0), 0).unwrap();
        assert!(out.is_empty() && rec.is_none());
        let (out, rec) = g.compute_input_output(t(10.0), 0).unwrap();
        assert_eq!(out, MessageBag::single("out", 1));
        assert!(rec.is_some());
        assert!(g.compute_input_output(t(11.0), 0).is_err());
    }

    #[test]
    fn duplicates_are_kept_and_undeclared_ports_rejected() {
        let mut p = sim("processor", "Proc", json!({"service_time": 2.5}));
        p.initialize(t(0.0));
        p.put_content_on_simulator(ContentItem::new("in", 1)).unwrap();
        p.put_content_on_simulator(ContentItem::new("in", 1)).unwrap();
        assert_eq!(p.pending().unwrap().count_on("in"), 2);
        assert!(matches!(
            p.put_content_on_simulator(ContentItem::new("bogus", 1)),
            Err(Error::UndeclaredPort { .. })
        ));
    }

    #[test]
    fn passive_processor_goes_external() {
        let mut p = sim("processor", "Proc", json!({"service_time": 2.5}));
        p.initialize(t(0.0));
        p.put_content_on_simulator(ContentItem::new("in", 1)).unwrap();
        let d = p.apply_delt_func(t(10.0), 0).unwrap();
        assert_eq!(d.kind, TransitionKind::External);
        assert_eq!(d.tn, t(12.5));
        assert!(p.pending().unwrap().is_empty());
    }

    #[test]
    fn generator_internal_then_idle_noop() {
        let mut g = sim("generator", "Gen", json!({"period": 10}));
        g.initialize(t(0.0));
        let d = g.apply_delt_func(t(10.0), 0).unwrap();
        assert_eq!((d.kind, d.tn), (TransitionKind::Internal, t(20.0)));
        let d = g.apply_delt_func(t(15.0), 1).unwrap();
        assert_eq!((d.kind, d.tn), (TransitionKind::NoOp, t(20.0)));
        assert!(d.record.is_none());
    }

    #[test]
    fn send_requires_resolvable_peers() {
        let mut g = sim("generator", "Gen", json!({"period": 10}));
        g.initialize(t(0.0));
        g.set_routing(RoutingTable::from_couplings(
            "Gen",
            &[Coupling::new("Gen", "out", "Proc", "in")],
        ));
        let out = MessageBag::single("out", 1);
        let mut sink = |_: &str, _: ContentItem| Ok(());
        assert!(matches!(
            g.send_messages(&out, &mut sink),
            Err(Error::RoutingUnresolvable { .. })
        ));

        g.set_simulators([("Proc".to_owned(), "Proc@local".to_owned())].into());
        let mut got = Vec::new();
        let n = g
            .send_messages(&out, &mut |peer, item| {
                got.push((peer.to_owned(), item));
                Ok(())
            })
            .unwrap();
        assert_eq!(n, 1);
        assert_eq!(got, vec![("Proc@local".to_owned(), ContentItem::new("in", 1))]);

        let mut calls = 0;
        g.send_messages(&MessageBag::new(), &mut |_, _| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 0);
    }

    #[test]
    fn standalone_simulator_drops_outputs() {
        let g = sim("generator", "Gen", json!({"period": 10}));
        let n = g
            .send_messages(&MessageBag::single("out", 1), &mut |_, _| panic!("no delivery expected"))
            .unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn delivery_after_transition_is_a_barrier_violation() {
        let mut p = sim("processor", "Proc", json!({"service_time": 2.5}));
        p.initialize(t(0.0));
        p.compute_input_output(t(5.0), 0).unwrap();
        p.apply_delt_func(t(5.0), 0).unwrap();
        assert!(matches!(
            p.put_content_on_simulator(ContentItem::new("in", 1)),
            Err(Error::BarrierViolation(_))
        ));
        p.compute_input_output(t(6.0), 1).unwrap();
        p.put_content_on_simulator(ContentItem::new("in", 1)).unwrap();
    }
}

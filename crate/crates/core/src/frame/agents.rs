use std::any::Any;
use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::atomic::{AtomicSpec, Behavior};
use crate::behaviors::Params;
use crate::error::Result;
use crate::frame::rule::StopRule;
use crate::message::{canonical, ContentItem, MessageBag, Value, ValueMap};
use crate::time::SimTime;

pub const OBSERVED_IN: &str = "observed_in";
pub const OBSERVED_OUT: &str = "observed_out";
pub const ARRIVED: &str = "arrived";
pub const SOLVED: &str = "solved";
pub const METRICS: &str = "metrics";

/// Running statistics of a frame transducer. This is also the payload
/// emitted on its `metrics` port.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub frame: String,
    /// Metric names the frame reports.
    #[serde(default)]
    pub metrics: Vec<String>,
    pub arrived: u64,
    pub solved: u64,
    /// Completions paired with an earlier arrival of the same job.
    pub matched: u64,
    /// Completions with no matching arrival.
    pub unmatched: u64,
    pub turnaround_sum: f64,
    pub max_turnaround: f64,
}

impl Tally {
    /// `solved / now`, or 0 at time zero.
    pub fn throughput(&self, now: SimTime) -> f64 {
        if now.value() > 0.0 {
            self.solved as f64 / now.value()
        } else {
            0.0
        }
    }

    pub fn mean_turnaround(&self) -> f64 {
        if self.matched == 0 {
            0.0
        } else {
            self.turnaround_sum / self.matched as f64
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("tally serialises")
    }

    pub fn from_value(v: &Value) -> Option<Tally> {
        serde_json::from_value(v.clone()).ok()
    }
}

/// Pass-through tap. Items seen on the observed component's inputs leave on
/// `arrived`, items it emitted leave on `solved`, both with zero delay.
#[derive(Debug, Clone, Default)]
pub struct Observer {
    inbound: Vec<Value>,
    outbound: Vec<Value>,
}

impl Observer {
    pub(crate) fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        Params::new("observer", params, &[])?;
        Ok(AtomicSpec::new(
            "observer",
            [OBSERVED_IN, OBSERVED_OUT],
            [ARRIVED, SOLVED],
            Box::new(Observer::default()),
        ))
    }
}

impl Behavior for Observer {
    fn init(&mut self) {
        self.inbound.clear();
        self.outbound.clear();
    }

    fn delta_int(&mut self) {
        self.init();
    }

    fn delta_ext(&mut self, _elapsed: SimTime, input: &MessageBag) {
        self.inbound.extend(input.on_port(OBSERVED_IN).cloned());
        self.outbound.extend(input.on_port(OBSERVED_OUT).cloned());
    }

    fn output(&self) -> MessageBag {
        let arrived = self.inbound.iter().map(|v| ContentItem::new(ARRIVED, v.clone()));
        let solved = self.outbound.iter().map(|v| ContentItem::new(SOLVED, v.clone()));
        arrived.chain(solved).collect()
    }

    fn time_advance(&self) -> SimTime {
        if self.inbound.is_empty() && self.outbound.is_empty() {
            SimTime::INFINITY
        } else {
            SimTime::ZERO
        }
    }

    fn clone_box(&self) -> Box<dyn Behavior> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Frame transducer: pairs arrivals with completions by job value and
/// publishes its [`Tally`] on `metrics` whenever it changes.
#[derive(Debug, Clone)]
pub struct FrameTransducer {
    frame: String,
    metrics: Vec<String>,
    tally: Tally,
    open: BTreeMap<String, VecDeque<SimTime>>,
    clock: SimTime,
    dirty: bool,
}

impl FrameTransducer {
    pub fn new(frame: &str, metrics: Vec<String>) -> Self {
        let mut t = FrameTransducer {
            frame: frame.to_owned(),
            metrics,
            tally: Tally::default(),
            open: BTreeMap::new(),
            clock: SimTime::ZERO,
            dirty: false,
        };
        t.init();
        t
    }

    pub(crate) fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        let p = Params::new("ef_transducer", params, &["frame", "metrics"])?;
        let frame = p.string("frame")?.unwrap_or("frame");
        let metrics = p
            .list("metrics")?
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                _ => Err(p.bad("`metrics` must be a list of strings")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AtomicSpec::new(
            "ef_transducer",
            [ARRIVED, SOLVED],
            [METRICS],
            Box::new(FrameTransducer::new(frame, metrics)),
        ))
    }

    pub fn tally(&self) -> &Tally {
        &self.tally
    }

    /// Folds one batch of simultaneous arrivals and completions observed at
    /// absolute time `at`.
    pub fn record(&mut self, at: SimTime, input: &MessageBag) {
        let mut touched = false;
        for v in input.on_port(ARRIVED) {
            self.open.entry(canonical(v)).or_default().push_back(at);
            self.tally.arrived += 1;
            touched = true;
        }
        for v in input.on_port(SOLVED) {
            self.tally.solved += 1;
            touched = true;
            match self.open.get_mut(&canonical(v)).and_then(VecDeque::pop_front) {
                Some(arrival) => {
                    let turnaround = (at - arrival).value();
                    self.tally.matched += 1;
                    self.tally.turnaround_sum += turnaround;
                    self.tally.max_turnaround = self.tally.max_turnaround.max(turnaround);
                }
                None => self.tally.unmatched += 1,
            }
        }
        self.dirty |= touched;
    }
}

impl Behavior for FrameTransducer {
    fn init(&mut self) {
        self.tally = Tally {
            frame: self.frame.clone(),
            metrics: self.metrics.clone(),
            ..Tally::default()
        };
        self.open.clear();
        self.clock = SimTime::ZERO;
        self.dirty = false;
    }

    fn delta_int(&mut self) {
        self.dirty = false;
    }

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag) {
        self.clock = self.clock + elapsed;
        let at = self.clock;
        self.record(at, input);
    }

    fn output(&self) -> MessageBag {
        if self.dirty {
            MessageBag::single(METRICS, self.tally.to_value())
        } else {
            MessageBag::new()
        }
    }

    fn time_advance(&self) -> SimTime {
        if self.dirty {
            SimTime::ZERO
        } else {
            SimTime::INFINITY
        }
    }

    fn clone_box(&self) -> Box<dyn Behavior> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Acceptor: watches the latest tally and the clock and emits a single
/// `stop` item at the earliest event time at which its rule holds.
#[derive(Debug, Clone)]
pub struct Acceptor {
    frame: String,
    rule: Option<StopRule>,
    tally: Tally,
    clock: SimTime,
    sigma: SimTime,
    pending: bool,
    stopped: bool,
}

impl Acceptor {
    pub fn new(frame: &str, rule: Option<StopRule>) -> Self {
        let mut a = Acceptor {
            frame: frame.to_owned(),
            rule,
            tally: Tally::default(),
            clock: SimTime::ZERO,
            sigma: SimTime::INFINITY,
            pending: false,
            stopped: false,
        };
        a.init();
        a
    }

    pub(crate) fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        let p = Params::new("ef_acceptor", params, &["frame", "rule"])?;
        let frame = p.string("frame")?.unwrap_or("frame");
        let rule = p
            .string("rule")?
            .map(StopRule::parse)
            .transpose()
            .map_err(|e| p.bad(e.to_string()))?;
        Ok(AtomicSpec::new(
            "ef_acceptor",
            [METRICS],
            [crate::kernel::STOP_PORT],
            Box::new(Acceptor::new(frame, rule)),
        ))
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    fn holds(&self, now: SimTime) -> bool {
        self.rule.as_ref().is_some_and(|r| r.holds(now, &self.tally))
    }

    fn schedule(&mut self) {
        self.sigma = if self.stopped {
            SimTime::INFINITY
        } else if self.pending {
            SimTime::ZERO
        } else {
            self.rule
                .as_ref()
                .and_then(|r| r.next_threshold_after(self.clock))
                .map_or(SimTime::INFINITY, |at| at - self.clock)
        };
    }

    fn reason(&self) -> Value {
        json!({
            "frame": self.frame,
            "rule": self.rule.as_ref().map(StopRule::text),
        })
    }
}

impl Behavior for Acceptor {
    fn init(&mut self) {
        self.tally = Tally {
            frame: self.frame.clone(),
            ..Tally::default()
        };
        self.clock = SimTime::ZERO;
        self.stopped = false;
        self.pending = self.holds(SimTime::ZERO);
        self.schedule();
    }

    fn delta_int(&mut self) {
        self.clock = self.clock + self.sigma;
        if self.pending || self.holds(self.clock) {
            self.stopped = true;
            self.pending = false;
        }
        self.schedule();
    }

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag) {
        self.clock = self.clock + elapsed;
        if let Some(latest) = input
            .on_port(METRICS)
            .filter_map(Tally::from_value)
            .max_by_key(|t| (t.arrived + t.solved, t.matched))
        {
            self.tally = latest;
        }
        if !self.stopped && self.holds(self.clock) {
            self.pending = true;
        }
        self.schedule();
    }

    fn output(&self) -> MessageBag {
        if self.stopped {
            return MessageBag::new();
        }
        if self.pending || (self.sigma.is_finite() && self.holds(self.clock + self.sigma)) {
            MessageBag::single(crate::kernel::STOP_PORT, self.reason())
        } else {
            MessageBag::new()
        }
    }

    fn time_advance(&self) -> SimTime {
        self.sigma
    }

    fn clone_box(&self) -> Box<dyn Behavior> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

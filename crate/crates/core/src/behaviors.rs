//! Built-in behavior library and the registry that instantiates behaviors by
//! kind name.
//!
//! Model documents never carry code. Each atomic component names a registered
//! kind plus a parameter map, and every simulation service holds the same
//! registry.
//!
//! Built-in kinds:
//!
//! | kind         | inputs              | outputs   | params                              |
//! |--------------|---------------------|-----------|-------------------------------------|
//! | `generator`  |                     | `out`     | `period > 0`                        |
//! | `processor`  | `in`                | `out`     | `service_time >= 0`                 |
//! | `transducer` | `arrived`, `solved` | `report`  | `observation_time > 0`              |
//! | `buffer`     | `in`                | `out`     | `delay >= 0`, optional `initial`    |
//!
//! The experimental-frame kinds (`observer`, `ef_transducer`, `ef_acceptor`)
//! are registered from [`crate::frame`].

use std::any::Any;
use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde_json::json;

use crate::atomic::{AtomicSpec, Behavior};
use crate::error::{Error, Result};
use crate::message::{canonical, ContentItem, MessageBag, Value, ValueMap};
use crate::time::SimTime;

pub type Factory = fn(&ValueMap) -> Result<AtomicSpec>;

/// Maps behavior kind names to factories.
#[derive(Clone)]
pub struct BehaviorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl BehaviorRegistry {
    pub fn empty() -> Self {
        BehaviorRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding every built-in kind.
    pub fn builtin() -> Self {
        let mut reg = BehaviorRegistry::empty();
        reg.register("generator", Generator::factory);
        reg.register("processor", Processor::factory);
        reg.register("transducer", Transducer::factory);
        reg.register("buffer", Buffer::factory);
        crate::frame::register_frame_behaviors(&mut reg);
        reg
    }

    pub fn register(&mut self, kind: &str, factory: Factory) {
        self.factories.insert(kind.to_owned(), factory);
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.factories.contains_key(kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Builds a fresh, uninitialised atomic model named after its kind.
    pub fn instantiate(&self, kind: &str, params: &ValueMap) -> Result<AtomicSpec> {
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| Error::UnknownBehavior(kind.to_owned()))?;
        factory(params)
    }
}

impl std::fmt::Debug for BehaviorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

fn builtin_registry() -> &'static BehaviorRegistry {
    static REGISTRY: OnceLock<BehaviorRegistry> = OnceLock::new();
    REGISTRY.get_or_init(BehaviorRegistry::builtin)
}

/// Instantiates a built-in behavior.
pub fn instantiate_behavior(kind: &str, params: &ValueMap) -> Result<AtomicSpec> {
    builtin_registry().instantiate(kind, params)
}

/// Parameter reader that reports problems as [`Error::BadParams`].
pub(crate) struct Params<'a> {
    kind: &'static str,
    map: &'a ValueMap,
}

impl<'a> Params<'a> {
    pub(crate) fn new(kind: &'static str, map: &'a ValueMap, allowed: &[&str]) -> Result<Self> {
        if let Some(unknown) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::BadParams {
                kind: kind.to_owned(),
                reason: format!("unknown parameter `{unknown}`"),
            });
        }
        Ok(Params { kind, map })
    }

    pub(crate) fn bad(&self, reason: impl Into<String>) -> Error {
        Error::BadParams {
            kind: self.kind.to_owned(),
            reason: reason.into(),
        }
    }

    pub(crate) fn number(&self, key: &str) -> Result<f64> {
        match self.map.get(key) {
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.bad(format!("`{key}` must be a finite number"))),
            None => Err(self.bad(format!("missing `{key}`"))),
        }
    }

    pub(crate) fn positive(&self, key: &str) -> Result<SimTime> {
        let v = self.number(key)?;
        if v > 0.0 {
            Ok(SimTime::new(v).expect("positive"))
        } else {
            Err(self.bad(format!("`{key}` must be > 0, got {v}")))
        }
    }

    pub(crate) fn non_negative(&self, key: &str) -> Result<SimTime> {
        let v = self.number(key)?;
        SimTime::new(v).map_err(|_| self.bad(format!("`{key}` must be >= 0, got {v}")))
    }

    pub(crate) fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.bad(format!("`{key}` must be a string"))),
        }
    }

    pub(crate) fn list(&self, key: &str) -> Result<Vec<Value>> {
        match self.map.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => Ok(items.clone()),
            Some(_) => Err(self.bad(format!("`{key}` must be a list"))),
        }
    }
}

/// Emits job `k` (1-based) on `out` at `k · period`.
#[derive(Debug, Clone)]
pub struct Generator {
    period: SimTime,
    emitted: u64,
    sigma: SimTime,
}

impl Generator {
    pub fn new(period: SimTime) -> Self {
        Generator {
            period,
            emitted: 0,
            sigma: period,
        }
    }

    fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        let p = Params::new("generator", params, &["period"])?;
        let period = p.positive("period")?;
        Ok(AtomicSpec::new(
            "generator",
            [] as [&str; 0],
            ["out"],
            Box::new(Generator::new(period)),
        ))
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}

impl Behavior for Generator {
    fn init(&mut self) {
        self.emitted = 0;
        self.sigma = self.period;
    }

    fn delta_int(&mut self) {
        self.emitted += 1;
        self.sigma = self.period;
    }

    fn delta_ext(&mut self, elapsed: SimTime, _input: &MessageBag) {
        self.sigma = self.sigma - elapsed;
    }

    fn output(&self) -> MessageBag {
        MessageBag::single("out", self.emitted + 1)
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

/// Single-server processor. Accepts one job while idle, holds it for
/// `service_time`, then emits it on `out`. Arrivals while busy are discarded.
#[derive(Debug, Clone)]
pub struct Processor {
    service_time: SimTime,
    job: Option<Value>,
    sigma: SimTime,
    discarded: u64,
}

impl Processor {
    pub fn new(service_time: SimTime) -> Self {
        Processor {
            service_time,
            job: None,
            sigma: SimTime::INFINITY,
            discarded: 0,
        }
    }

    fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        let p = Params::new("processor", params, &["service_time"])?;
        let service_time = p.non_negative("service_time")?;
        Ok(AtomicSpec::new("processor", ["in"], ["out"], Box::new(Processor::new(service_time))))
    }

    pub fn job(&self) -> Option<&Value> {
        self.job.as_ref()
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }
}

impl Behavior for Processor {
    fn init(&mut self) {
        self.job = None;
        self.sigma = SimTime::INFINITY;
        self.discarded = 0;
    }

    fn delta_int(&mut self) {
        self.job = None;
        self.sigma = SimTime::INFINITY;
    }

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag) {
        let arrivals: Vec<&Value> = input.on_port("in").collect();
        if self.job.is_some() {
            self.sigma = self.sigma - elapsed;
            self.discarded += arrivals.len() as u64;
            return;
        }
        // Simultaneous arrivals: keep the canonically smallest job so the
        // result does not depend on bag order.
        let Some(first) = arrivals.iter().min_by_key(|v| canonical(v)) else {
            return;
        };
        self.job = Some((*first).clone());
        self.discarded += arrivals.len() as u64 - 1;
        self.sigma = self.service_time;
    }

    fn output(&self) -> MessageBag {
        match &self.job {
            Some(job) => MessageBag::single("out", job.clone()),
            None => MessageBag::new(),
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

/// Counts items on `arrived` and `solved`; at `observation_time` emits a
/// report and passivates.
#[derive(Debug, Clone)]
pub struct Transducer {
    observation_time: SimTime,
    arrived: u64,
    solved: u64,
    sigma: SimTime,
}

impl Transducer {
    pub fn new(observation_time: SimTime) -> Self {
        Transducer {
            observation_time,
            arrived: 0,
            solved: 0,
            sigma: observation_time,
        }
    }

    fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        let p = Params::new("transducer", params, &["observation_time"])?;
        let observation_time = p.positive("observation_time")?;
        Ok(AtomicSpec::new(
            "transducer",
            ["arrived", "solved"],
            ["report"],
            Box::new(Transducer::new(observation_time)),
        ))
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.arrived, self.solved)
    }
}

impl Behavior for Transducer {
    fn init(&mut self) {
        self.arrived = 0;
        self.solved = 0;
        self.sigma = self.observation_time;
    }

    fn delta_int(&mut self) {
        self.sigma = SimTime::INFINITY;
    }

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag) {
        self.arrived += input.count_on("arrived") as u64;
        self.solved += input.count_on("solved") as u64;
        self.sigma = self.sigma - elapsed;
    }

    fn output(&self) -> MessageBag {
        let throughput = self.solved as f64 / self.observation_time.value();
        MessageBag::single(
            "report",
            json!({"arrived": self.arrived, "solved": self.solved, "throughput": throughput}),
        )
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

/// Holds everything received on `in` and releases it as one bag on `out`
/// `delay` after the first item arrived. `initial` seeds the buffer.
#[derive(Debug, Clone)]
pub struct Buffer {
    delay: SimTime,
    initial: Vec<Value>,
    held: Vec<Value>,
    sigma: SimTime,
}

impl Buffer {
    pub fn new(delay: SimTime, initial: Vec<Value>) -> Self {
        let mut b = Buffer {
            delay,
            initial,
            held: Vec::new(),
            sigma: SimTime::INFINITY,
        };
        b.init();
        b
    }

    fn factory(params: &ValueMap) -> Result<AtomicSpec> {
        let p = Params::new("buffer", params, &["delay", "initial"])?;
        let delay = p.non_negative("delay")?;
        let initial = p.list("initial")?;
        Ok(AtomicSpec::new("buffer", ["in"], ["out"], Box::new(Buffer::new(delay, initial))))
    }
}

impl Behavior for Buffer {
    fn init(&mut self) {
        self.held = self.initial.clone();
        self.sigma = if self.held.is_empty() {
            SimTime::INFINITY
        } else {
            self.delay
        };
    }

    fn delta_int(&mut self) {
        self.held.clear();
        self.sigma = SimTime::INFINITY;
    }

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag) {
        let was_empty = self.held.is_empty();
        self.held.extend(input.on_port("in").cloned());
        if self.held.is_empty() {
            return;
        }
        self.sigma = if was_empty { self.delay } else { self.sigma - elapsed };
    }

    fn output(&self) -> MessageBag {
        self.held
            .iter()
            .map(|v| ContentItem::new("out", v.clone()))
            .collect()
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

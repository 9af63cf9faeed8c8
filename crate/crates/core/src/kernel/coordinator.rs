use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::closure::digraph_to_atomic;
use crate::coupled::{validate_coupled, Component, CoupledSpec, EXTERNAL};
use crate::error::{Error, Result};
use crate::kernel::routing::RoutingTable;
use crate::kernel::run::{
    drive, CycleDriver, CycleOutput, Interrupted, LivelockGuard, RunMode, RunPlan, RunSummary,
    DEFAULT_DEADLINE_SLACK, DEFAULT_LIVELOCK_GUARD,
};
use crate::kernel::simulator::{simulator_id, Simulator};
use crate::kernel::trace::TraceRecord;
use crate::message::{ContentItem, MessageBag};
use crate::time::SimTime;

#[derive(Debug, Clone)]
pub struct KernelConfig {
    /// Client address used in simulator ids (`Name@client`).
    pub client: String,
    pub livelock_guard: u64,
    /// Run the output and transition phases on the rayon pool.
    pub parallel: bool,
    pub record_trace: bool,
    pub deadline_slack: std::time::Duration,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            client: "local".into(),
            livelock_guard: DEFAULT_LIVELOCK_GUARD,
            parallel: false,
            record_trace: true,
            deadline_slack: DEFAULT_DEADLINE_SLACK,
        }
    }
}

/// In-process coordinator: one simulator per top-level component, stepped
/// through the output / propagate / transition phases of each cycle.
///
/// Nested coupled components are wrapped with [`digraph_to_atomic`], so the
/// coordinator itself only ever sees atomic simulators.
#[derive(Debug, Clone)]
pub struct Coordinator {
    name: String,
    sims: Vec<Simulator>,
    index: HashMap<String, usize>,
    external_inputs: RoutingTable,
    config: KernelConfig,
    guard: LivelockGuard,
    cycle: u64,
    t_last: SimTime,
}

impl Coordinator {
    pub fn new(spec: CoupledSpec, config: KernelConfig) -> Result<Self> {
        validate_coupled(&spec).map_err(Error::ValidationFailed)?;

        let mut sims: Vec<Simulator> = Vec::with_capacity(spec.components.len());
        for component in &spec.components {
            let atomic = match component {
                Component::Atomic(a) => a.clone(),
                Component::Coupled(c) => digraph_to_atomic(c)?,
            };
            let mut sim = Simulator::new(atomic, &config.client);
            sim.set_routing(RoutingTable::from_couplings(sim.name(), &spec.couplings));
            sims.push(sim);
        }
        sims.sort_by(|a, b| a.name().cmp(b.name()));

        let ids: BTreeMap<String, String> = sims
            .iter()
            .map(|s| (s.name().to_owned(), simulator_id(s.name(), &config.client)))
            .collect();
        for sim in &mut sims {
            let peers = ids
                .iter()
                .filter(|(name, _)| {
                    name.as_str() != sim.name() || sim.routing().targets().any(|t| t == name.as_str())
                })
                .map(|(n, id)| (n.clone(), id.clone()))
                .collect();
            sim.set_simulators(peers);
        }

        let index = sims
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id().to_owned(), i))
            .collect();

        Ok(Coordinator {
            name: spec.name.clone(),
            external_inputs: RoutingTable::from_couplings(EXTERNAL, &spec.couplings),
            guard: LivelockGuard::new(config.livelock_guard),
            sims,
            index,
            config,
            cycle: 0,
            t_last: SimTime::ZERO,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn simulators(&self) -> &[Simulator] {
        &self.sims
    }

    pub fn simulator(&self, component: &str) -> Option<&Simulator> {
        self.sims.iter().find(|s| s.name() == component)
    }

    /// Cycles executed since construction.
    pub fn cycles(&self) -> u64 {
        self.cycle
    }

    /// Time of the last processed event, or the start time.
    pub fn current_time(&self) -> SimTime {
        self.t_last
    }

    pub fn initialize(&mut self, t0: SimTime) {
        for sim in &mut self.sims {
            sim.initialize(t0);
        }
        self.t_last = t0;
        self.guard.reset();
    }

    /// Minimum time of next event over all simulators.
    pub fn next_tn(&self) -> SimTime {
        self.sims
            .iter()
            .map(Simulator::next_tn)
            .fold(SimTime::INFINITY, SimTime::min)
    }

    /// Delivers input arriving on the coupled model's own input ports. Must
    /// be called before the cycle that should observe it.
    pub fn inject(&mut self, input: &MessageBag) -> Result<()> {
        for sim in &mut self.sims {
            sim.begin_cycle();
        }
        for (component, item) in self.external_inputs.deliveries(input) {
            let id = simulator_id(&component, &self.config.client);
            let i = *self
                .index
                .get(&id)
                .ok_or(Error::UnknownComponent(component))?;
            self.sims[i].put_content_on_simulator(item)?;
        }
        Ok(())
    }

    /// Output the coupled model would emit on its own ports if a cycle ran
    /// at `t`. Leaves every simulator untouched.
    pub fn peek_output(&self, t: SimTime) -> Result<MessageBag> {
        let mut external = MessageBag::new();
        for sim in self.sims.iter().filter(|s| s.next_tn() == t) {
            let output = sim.model().behavior.output();
            for (component, item) in sim.routing().deliveries(&output) {
                if component == EXTERNAL {
                    external.push(item);
                }
            }
        }
        Ok(external)
    }

    /// One protocol cycle at global time `t`. Returns the next global time.
    pub fn cycle(&mut self, t: SimTime) -> Result<SimTime> {
        Ok(self.step(t)?.next_tn)
    }

    fn step(&mut self, t: SimTime) -> Result<CycleOutput> {
        self.guard.enter(t)?;
        let cycle = self.cycle;
        let record = self.config.record_trace;

        // Phase A: every simulator computes its output.
        let phase_a = |sim: &mut Simulator| sim.compute_input_output(t, cycle);
        let produced: Vec<(MessageBag, Option<TraceRecord>)> = if self.config.parallel {
            self.sims.par_iter_mut().map(phase_a).collect::<Result<_>>()?
        } else {
            self.sims.iter_mut().map(phase_a).collect::<Result<_>>()?
        };

        let mut records = Vec::new();
        let mut outputs = Vec::with_capacity(produced.len());
        for (bag, rec) in produced {
            if record {
                records.extend(rec);
            }
            outputs.push(bag);
        }

        // Phase B: propagate along couplings via put_content_on_simulator.
        let mut external = MessageBag::new();
        for (i, output) in outputs.iter().enumerate() {
            if output.is_empty() {
                continue;
            }
            let mut deliveries: Vec<(String, ContentItem)> = Vec::new();
            self.sims[i].send_messages(output, &mut |peer, item| {
                deliveries.push((peer.to_owned(), item));
                Ok(())
            })?;
            for (peer, item) in deliveries {
                if peer == EXTERNAL {
                    external.push(item);
                    continue;
                }
                let j = *self
                    .index
                    .get(&peer)
                    .ok_or_else(|| Error::RoutingUnresolvable {
                        component: self.sims[i].id().to_owned(),
                        target: peer.clone(),
                    })?;
                self.sims[j].put_content_on_simulator(item)?;
            }
        }

        // Phase C: every simulator applies its transition.
        let phase_c = |sim: &mut Simulator| sim.apply_delt_func(t, cycle);
        let outcomes = if self.config.parallel {
            self.sims.par_iter_mut().map(phase_c).collect::<Result<Vec<_>>>()?
        } else {
            self.sims.iter_mut().map(phase_c).collect::<Result<Vec<_>>>()?
        };
        if record {
            records.extend(outcomes.into_iter().filter_map(|o| o.record));
        }

        self.cycle += 1;
        self.t_last = t;
        Ok(CycleOutput {
            cycle,
            records,
            external,
            next_tn: self.next_tn(),
        })
    }

    /// Runs with an explicit plan, keeping the partial summary on failure.
    pub fn run(&mut self, plan: &RunPlan) -> std::result::Result<RunSummary, Interrupted<Error>> {
        let start = self.t_last;
        drive(self, plan, start)
    }

    pub fn run_mode(&mut self, mode: RunMode) -> Result<RunSummary> {
        let mut plan = mode.plan()?;
        if let Some(p) = plan.realtime.as_mut() {
            p.slack = self.config.deadline_slack;
        }
        self.run(&plan).map_err(|i| i.error)
    }

    /// Executes up to `iterations` cycles.
    pub fn simulate(&mut self, iterations: u64) -> Result<RunSummary> {
        self.run_mode(RunMode::Iterations(iterations))
    }

    /// Executes every cycle whose global time is `<= t_end`.
    ///
    /// With `t_end = +∞` and a model that never passivates this does not
    /// return; use [`Coordinator::run_until_capped`].
    pub fn run_until(&mut self, t_end: SimTime) -> Result<RunSummary> {
        self.run_mode(RunMode::Until(t_end))
    }

    pub fn run_until_capped(&mut self, t_end: SimTime, max_cycles: u64) -> Result<RunSummary> {
        self.run(&RunPlan {
            t_end,
            max_cycles: Some(max_cycles),
            realtime: None,
        })
        .map_err(|i| i.error)
    }

    /// Like [`Coordinator::run_until`], paced so the cycle for global time `t`
    /// starts `scale · t` wall seconds after the call.
    pub fn run_realtime(&mut self, scale: f64, t_end: SimTime) -> Result<RunSummary> {
        self.run_mode(RunMode::Realtime { scale, until: t_end })
    }
}

impl CycleDriver for Coordinator {
    type Error = Error;

    fn global_tn(&self) -> SimTime {
        self.next_tn()
    }

    fn run_cycle(&mut self, t: SimTime) -> Result<CycleOutput> {
        self.step(t)
    }
}

/// Builds, initialises at `t0` and returns a coordinator for `spec`.
pub fn local_federation(spec: CoupledSpec, t0: SimTime) -> Result<Coordinator> {
    let mut coord = Coordinator::new(spec, KernelConfig::default())?;
    coord.initialize(t0);
    Ok(coord)
}

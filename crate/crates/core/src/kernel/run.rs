//! The run loop shared by the in-process and networked coordinators.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::kernel::trace::TraceRecord;
use crate::message::{MessageBag, Value};
use crate::time::SimTime;

/// Reserved output port of a top-level model: an item here ends the run.
pub const STOP_PORT: &str = "stop";

/// Default bound on cycles executed at one timestamp.
pub const DEFAULT_LIVELOCK_GUARD: u64 = 1000;

/// Default tolerated lag behind the wall-clock schedule.
pub const DEFAULT_DEADLINE_SLACK: Duration = Duration::from_millis(20);

/// How long to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// At most `n` coordinator cycles.
    Iterations(u64),
    /// Every event time `<= t`.
    Until(SimTime),
    /// Like `Until`, paced against the wall clock at `scale` seconds per
    /// simulated time unit.
    Realtime { scale: f64, until: SimTime },
}

impl RunMode {
    pub fn plan(self) -> Result<RunPlan, Error> {
        Ok(match self {
            RunMode::Iterations(n) => RunPlan {
                t_end: SimTime::INFINITY,
                max_cycles: Some(n),
                realtime: None,
            },
            RunMode::Until(t_end) => RunPlan {
                t_end,
                max_cycles: None,
                realtime: None,
            },
            RunMode::Realtime { scale, until } => RunPlan {
                t_end: until,
                max_cycles: None,
                realtime: Some(Pacing::new(scale)?),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pacing {
    /// Wall seconds per simulated time unit.
    pub scale: f64,
    pub slack: Duration,
}

impl Pacing {
    pub fn new(scale: f64) -> Result<Self, Error> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::BadParams {
                kind: "realtime".into(),
                reason: format!("scale must be a positive number, got {scale}"),
            });
        }
        Ok(Pacing {
            scale,
            slack: DEFAULT_DEADLINE_SLACK,
        })
    }

    pub fn with_slack(mut self, slack: Duration) -> Self {
        self.slack = slack;
        self
    }
}

/// Termination conditions for [`drive`]. The loop also stops when the
/// global time of next event is `+∞` or a stop item reaches [`STOP_PORT`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub t_end: SimTime,
    pub max_cycles: Option<u64>,
    pub realtime: Option<Pacing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    /// An acceptor asked the run to stop.
    Stopped { t: SimTime, reason: Value },
    /// The run broke off; the summary holds everything up to `last_cycle`.
    Aborted { last_cycle: Option<u64>, reason: String },
}

/// Output that reached the top-level model's own output ports in one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEvent {
    pub t: SimTime,
    pub cycle: u64,
    pub bag: MessageBag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineMiss {
    pub t: SimTime,
    pub lag_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(flatten)]
    pub status: RunStatus,
    /// Time of the last processed event (the start time if none ran).
    pub final_t: SimTime,
    /// Global time of next event after the run.
    pub next_tn: SimTime,
    pub cycles: u64,
    pub trace: Vec<TraceRecord>,
    pub external: Vec<ExternalEvent>,
    #[serde(default)]
    pub deadline_misses: Vec<DeadlineMiss>,
}

impl RunSummary {
    pub fn new(start: SimTime) -> Self {
        RunSummary {
            status: RunStatus::Completed,
            final_t: start,
            next_tn: start,
            cycles: 0,
            trace: Vec::new(),
            external: Vec::new(),
            deadline_misses: Vec::new(),
        }
    }

    /// Distinct event times visited, in order.
    pub fn event_times(&self) -> Vec<SimTime> {
        let mut times: Vec<SimTime> = self.trace.iter().map(|r| r.t).collect();
        times.dedup();
        times
    }

    /// Most recent value seen on each top-level output port.
    pub fn last_outputs(&self) -> std::collections::BTreeMap<String, Value> {
        let mut out = std::collections::BTreeMap::new();
        for ev in &self.external {
            for item in ev.bag.sorted_items() {
                out.insert(item.port, item.value);
            }
        }
        out
    }
}

/// What one coordinator cycle produced.
#[derive(Debug, Clone, Default)]
pub struct CycleOutput {
    pub cycle: u64,
    pub records: Vec<TraceRecord>,
    pub external: MessageBag,
    pub next_tn: SimTime,
}

/// A federation that can be stepped one global event time at a time.
pub trait CycleDriver {
    type Error: From<Error>;

    fn global_tn(&self) -> SimTime;

    fn run_cycle(&mut self, t: SimTime) -> Result<CycleOutput, Self::Error>;
}

/// A run that ended in an error, with everything recorded before it.
#[derive(Debug)]
pub struct Interrupted<E> {
    pub error: E,
    pub partial: Box<RunSummary>,
}

/// Counts consecutive cycles at one timestamp.
#[derive(Debug, Clone)]
pub struct LivelockGuard {
    limit: u64,
    last_t: Option<SimTime>,
    count: u64,
}

impl LivelockGuard {
    pub fn new(limit: u64) -> Self {
        LivelockGuard {
            limit,
            last_t: None,
            count: 0,
        }
    }

    /// Registers a cycle at `t`; fails once `limit` cycles have already run
    /// at that same time.
    pub fn enter(&mut self, t: SimTime) -> Result<(), Error> {
        if self.last_t == Some(t) {
            if self.count >= self.limit {
                return Err(Error::ZeroDelayLivelock { t, cycles: self.count });
            }
            self.count += 1;
        } else {
            self.last_t = Some(t);
            self.count = 1;
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.last_t = None;
        self.count = 0;
    }
}

/// Runs cycles until the plan, passivity or a stop item ends the run.
pub fn drive<D: CycleDriver>(
    driver: &mut D,
    plan: &RunPlan,
    start: SimTime,
) -> Result<RunSummary, Interrupted<D::Error>> {
    let wall_start = Instant::now();
    let mut summary = RunSummary::new(start);

    loop {
        if plan.max_cycles.is_some_and(|max| summary.cycles >= max) {
            break;
        }
        let t = driver.global_tn();
        if t.is_infinite() || t > plan.t_end {
            break;
        }

        let wall_ms = plan.realtime.map(|pacing| {
            let target = Duration::from_secs_f64(pacing.scale * t.value());
            let now = wall_start.elapsed();
            if target > now {
                std::thread::sleep(target - now);
            }
            let stamp = wall_start.elapsed();
            if stamp > target + pacing.slack {
                let lag_ms = (stamp - target).as_secs_f64() * 1e3;
                log::warn!("deadline miss at t={t}: {lag_ms:.3} ms late");
                summary.deadline_misses.push(DeadlineMiss { t, lag_ms });
            }
            stamp.as_secs_f64() * 1e3
        });

        let out = match driver.run_cycle(t) {
            Ok(out) => out,
            Err(error) => {
                summary.next_tn = driver.global_tn();
                return Err(Interrupted {
                    error,
                    partial: Box::new(summary),
                });
            }
        };

        summary.cycles += 1;
        summary.final_t = t;
        summary
            .trace
            .extend(out.records.into_iter().map(|r| TraceRecord { wall_ms, ..r }));

        let stop = out.external.on_port(STOP_PORT).next().cloned();
        if !out.external.is_empty() {
            summary.external.push(ExternalEvent {
                t,
                cycle: out.cycle,
                bag: out.external,
            });
        }
        if let Some(reason) = stop {
            summary.status = RunStatus::Stopped { t, reason };
            break;
        }
    }

    summary.next_tn = driver.global_tn();
    Ok(summary)
}

//! The abstract simulator: simulator handles, the coordinator and the trace.

mod coordinator;
mod routing;
mod run;
mod simulator;
mod trace;

pub use coordinator::{local_federation, Coordinator, KernelConfig};
pub use routing::{Route, RoutingTable};
pub use run::{
    drive, CycleDriver, CycleOutput, DeadlineMiss, ExternalEvent, Interrupted, LivelockGuard, Pacing,
    RunMode, RunPlan, RunStatus, RunSummary, DEFAULT_DEADLINE_SLACK, DEFAULT_LIVELOCK_GUARD, STOP_PORT,
};
pub use simulator::{simulator_id, DeltOutcome, Simulator};
pub use trace::{merge_records, trace_to_string, write_trace, Detail, RecordKind, TraceRecord};

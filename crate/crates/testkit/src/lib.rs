//! Test support for meshdevs: fixture models, a seeded random model
//! generator and a reference event-calendar simulator.

pub mod fixtures;
pub mod oracle;
pub mod random;

use meshdevs_core::kernel::RunSummary;
use meshdevs_core::message::canonical;

pub use fixtures::*;
pub use oracle::{group_by_time, run_oracle, OracleRun};
pub use random::{group, random_assignment, random_model, random_nested_model};

/// Top-level output of a kernel run in the same shape as
/// [`OracleRun::external_by_time`].
pub fn summary_external(summary: &RunSummary) -> std::collections::BTreeMap<u64, Vec<(String, String)>> {
    group_by_time(summary.external.iter().map(|ev| {
        let items = ev
            .bag
            .iter()
            .map(|i| (i.port.clone(), canonical(&i.value)))
            .collect();
        (ev.t.value(), items)
    }))
}

//! Daemon state: simulators, per-client consoles and uploaded models.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use meshdevs_core::kernel::Simulator;
use meshdevs_core::model::{ModelDocument, PartitionPlan};

pub type SimHandle = Arc<Mutex<Simulator>>;

/// A model known to this daemon: the full document when it was uploaded
/// here, and the bundle of components this daemon hosts.
#[derive(Debug, Clone, Default)]
pub struct StoredModel {
    pub document: Option<ModelDocument>,
    pub plan: Option<PartitionPlan>,
    pub bundle: Option<ModelDocument>,
}

#[derive(Debug)]
struct Entry {
    sim: SimHandle,
    touched: Instant,
}

#[derive(Debug)]
pub struct ServiceRegistry {
    self_address: String,
    simulators: Mutex<BTreeMap<String, Entry>>,
    idle_ttl: Option<Duration>,
    logs: Mutex<BTreeMap<String, Vec<String>>>,
    models: Mutex<BTreeMap<String, StoredModel>>,
    next_model: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panicking handler must not take the whole daemon down with it.
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl ServiceRegistry {
    pub fn new(self_address: &str) -> Self {
        ServiceRegistry {
            self_address: self_address.to_owned(),
            simulators: Mutex::new(BTreeMap::new()),
            idle_ttl: None,
            logs: Mutex::new(BTreeMap::new()),
            models: Mutex::new(BTreeMap::new()),
            next_model: AtomicU64::new(1),
        }
    }

    /// Simulators untouched for longer than `ttl` are dropped by
    /// [`ServiceRegistry::sweep_idle`].
    pub fn with_idle_ttl(mut self, ttl: Option<Duration>) -> Self {
        self.idle_ttl = ttl;
        self
    }

    pub fn self_address(&self) -> &str {
        &self.self_address
    }

    /// Registers a simulator; `false` if the id is taken.
    pub fn insert(&self, sim: Simulator) -> bool {
        let mut sims = lock(&self.simulators);
        if sims.contains_key(sim.id()) {
            return false;
        }
        let id = sim.id().to_owned();
        let entry = Entry {
            sim: Arc::new(Mutex::new(sim)),
            touched: Instant::now(),
        };
        sims.insert(id, entry);
        true
    }

    pub fn get(&self, id: &str) -> Option<SimHandle> {
        let mut sims = lock(&self.simulators);
        let entry = sims.get_mut(id)?;
        entry.touched = Instant::now();
        Some(entry.sim.clone())
    }

    /// Drops simulators idle past the TTL; returns their ids.
    pub fn sweep_idle(&self) -> Vec<String> {
        let Some(ttl) = self.idle_ttl else {
            return Vec::new();
        };
        let mut sims = lock(&self.simulators);
        let expired: Vec<String> = sims
            .iter()
            .filter(|(_, e)| e.touched.elapsed() > ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            sims.remove(id);
        }
        expired
    }

    pub fn remove(&self, id: &str) -> bool {
        lock(&self.simulators).remove(id).is_some()
    }

    pub fn remove_all(&self, ids: &BTreeSet<String>) {
        let mut sims = lock(&self.simulators);
        for id in ids {
            sims.remove(id);
        }
    }

    pub fn simulator_ids(&self) -> Vec<String> {
        lock(&self.simulators).keys().cloned().collect()
    }

    /// Drops every simulator.
    pub fn drain(&self) -> usize {
        let mut sims = lock(&self.simulators);
        let n = sims.len();
        sims.clear();
        n
    }

    pub fn log(&self, client: &str, line: String) {
        lock(&self.logs).entry(client.to_owned()).or_default().push(line);
    }

    pub fn console(&self, client: &str) -> String {
        lock(&self.logs)
            .get(client)
            .map(|lines| {
                let mut text = lines.join("\n");
                text.push('\n');
                text
            })
            .unwrap_or_default()
    }

    pub fn new_model_id(&self, name: &str) -> String {
        let n = self.next_model.fetch_add(1, Ordering::Relaxed);
        format!("{name}-{n}")
    }

    pub fn update_model(&self, id: &str, f: impl FnOnce(&mut StoredModel)) {
        f(lock(&self.models).entry(id.to_owned()).or_default());
    }

    pub fn model(&self, id: &str) -> Option<StoredModel> {
        lock(&self.models).get(id).cloned()
    }
}

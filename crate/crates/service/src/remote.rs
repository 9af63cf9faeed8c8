//! Coordinator driving simulators that live on remote services.
//!
//! Each cycle is three federation-wide phases of wire calls: `lambda` on
//! every simulator, `receiveInput` for every routed item, then `deltfcn` on
//! every simulator. Within a phase, servers are called concurrently; each
//! phase completes everywhere before the next starts.

use std::collections::BTreeMap;
use std::thread;

use meshdevs_core::coupled::EXTERNAL;
use meshdevs_core::kernel::{CycleDriver, CycleOutput, LivelockGuard, RoutingTable, TraceRecord};
use meshdevs_core::message::{MessageBag, Value};
use meshdevs_core::model::{ModelDocument, PartitionPlan};
use meshdevs_core::{Error as KernelError, SimTime};
use serde_json::json;
use thiserror::Error;

use crate::client::{Client, ClientError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RemoteError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl RemoteError {
    /// Transport failures abort a run; everything else is a model error.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            RemoteError::Client(ClientError::Unreachable { .. } | ClientError::Protocol { .. })
        )
    }

    pub fn code(&self) -> &str {
        match self {
            RemoteError::Client(c) => c.code(),
            RemoteError::Kernel(k) => crate::wire::kernel_code(k),
        }
    }
}

#[derive(Debug, Clone)]
struct RemoteSim {
    name: String,
    id: String,
    server: String,
    tn: SimTime,
}

pub struct RemoteCoordinator {
    sessions: BTreeMap<String, Client>,
    sims: Vec<RemoteSim>,
    routes: BTreeMap<String, RoutingTable>,
    guard: LivelockGuard,
    cycle: u64,
}

fn protocol(addr: &str, reason: impl Into<String>) -> RemoteError {
    RemoteError::Client(ClientError::Protocol {
        addr: addr.to_owned(),
        reason: reason.into(),
    })
}

fn parse_time(addr: &str, v: &Value) -> Result<SimTime, RemoteError> {
    serde_json::from_value(v.clone()).map_err(|e| protocol(addr, format!("bad time: {e}")))
}

fn parse_record(addr: &str, v: Option<&Value>) -> Result<Option<TraceRecord>, RemoteError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(r) => serde_json::from_value(r.clone())
            .map(Some)
            .map_err(|e| protocol(addr, format!("bad record: {e}"))),
    }
}

/// Runs `job` once per server, concurrently, and collects the results in
/// server order.
fn per_server<T: Send>(
    sessions: &mut BTreeMap<String, Client>,
    job: impl Fn(&str, &mut Client) -> Result<T, RemoteError> + Sync,
) -> Result<Vec<T>, RemoteError> {
    let job = &job;
    let results: Vec<Result<T, RemoteError>> = thread::scope(|scope| {
        let handles: Vec<_> = sessions
            .iter_mut()
            .map(|(addr, client)| scope.spawn(move || job(addr, client)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(protocol("coordinator", "worker panicked"))))
            .collect()
    });
    results.into_iter().collect()
}

impl RemoteCoordinator {
    /// Connects to every server of `plan` and creates one simulator per
    /// component under `client`.
    pub fn deploy(plan: &PartitionPlan, client: &str, livelock_guard: u64) -> Result<Self, RemoteError> {
        let mut sessions = BTreeMap::new();
        let mut sims = Vec::new();
        for (addr, bundle) in &plan.bundles {
            if bundle.components.is_empty() {
                continue;
            }
            let mut session = Client::connect(addr)?;
            for entry in &bundle.components {
                let id = session.call("newSimulator", None, json!({ "component": entry, "client": client }))?;
                let id = id
                    .as_str()
                    .ok_or_else(|| protocol(addr, "newSimulator returned no id"))?
                    .to_owned();
                sims.push(RemoteSim {
                    name: entry.name().to_owned(),
                    id,
                    server: addr.clone(),
                    tn: SimTime::INFINITY,
                });
            }
            sessions.insert(addr.clone(), session);
        }
        sims.sort_by(|a, b| a.name.cmp(&b.name));

        let couplings = plan.all_couplings();
        let routes = sims
            .iter()
            .map(|s| (s.name.clone(), RoutingTable::from_couplings(&s.name, &couplings)))
            .collect();
        Ok(RemoteCoordinator {
            sessions,
            sims,
            routes,
            guard: LivelockGuard::new(livelock_guard),
            cycle: 0,
        })
    }

    pub fn servers(&self) -> Vec<String> {
        self.sessions.keys().cloned().collect()
    }

    pub fn simulator_ids(&self) -> Vec<String> {
        self.sims.iter().map(|s| s.id.clone()).collect()
    }

    pub fn initialize(&mut self, t0: SimTime) -> Result<(), RemoteError> {
        let sims = self.sims.clone();
        let tns = per_server(&mut self.sessions, |addr, client| {
            sims.iter()
                .filter(|s| s.server == addr)
                .map(|s| {
                    let tn = client.call("initialize", Some(&s.id), json!({ "t": t0 }))?;
                    Ok((s.name.clone(), parse_time(addr, &tn)?))
                })
                .collect::<Result<Vec<_>, RemoteError>>()
        })?;
        self.apply_tns(tns.into_iter().flatten());
        self.guard.reset();
        Ok(())
    }

    fn apply_tns(&mut self, tns: impl IntoIterator<Item = (String, SimTime)>) {
        let tns: BTreeMap<String, SimTime> = tns.into_iter().collect();
        for s in &mut self.sims {
            if let Some(tn) = tns.get(&s.name) {
                s.tn = *tn;
            }
        }
    }

    /// Removes every simulator this coordinator created. Best effort: a
    /// server that went away has already dropped them with the session.
    pub fn exit_all(&mut self) {
        let sims = self.sims.clone();
        let _ = per_server(&mut self.sessions, |addr, client| {
            for s in sims.iter().filter(|s| s.server == addr) {
                let _ = client.call("exit", Some(&s.id), json!({}));
            }
            Ok(())
        });
    }

    /// Console text each server holds for `client`.
    pub fn consoles(&mut self, client: &str) -> BTreeMap<String, String> {
        let texts = per_server(&mut self.sessions, |addr, session| {
            let text = session
                .call("getConsole", None, json!({ "client": client }))
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            Ok((addr.to_owned(), text))
        });
        texts.map(|v| v.into_iter().collect()).unwrap_or_default()
    }

    fn step(&mut self, t: SimTime) -> Result<CycleOutput, RemoteError> {
        self.guard.enter(t)?;
        let cycle = self.cycle;
        let sims = self.sims.clone();
        let args = json!({ "t": t, "cycle": cycle });

        // Phase A: lambda on every simulator.
        let produced = per_server(&mut self.sessions, |addr, client| {
            let mut out = Vec::new();
            for s in sims.iter().filter(|s| s.server == addr) {
                let r = client.call("lambda", Some(&s.id), args.clone())?;
                let bag: MessageBag = serde_json::from_value(r.get("output").cloned().unwrap_or_default())
                    .map_err(|e| protocol(addr, format!("bad output: {e}")))?;
                out.push((s.name.clone(), bag, parse_record(addr, r.get("record"))?));
            }
            Ok(out)
        })?;

        let mut records = Vec::new();
        let mut external = MessageBag::new();
        // Deliveries grouped by destination server: (simulator id, from, item).
        let mut deliveries: BTreeMap<String, Vec<(String, String, meshdevs_core::ContentItem)>> = BTreeMap::new();
        let by_name: BTreeMap<&str, &RemoteSim> = self.sims.iter().map(|s| (s.name.as_str(), s)).collect();
        for (name, bag, record) in produced.into_iter().flatten() {
            records.extend(record);
            let table = &self.routes[&name];
            for item in bag.iter() {
                for (target, renamed) in table.deliveries(&MessageBag::from_iter([item.clone()])) {
                    if target == EXTERNAL {
                        external.push(renamed);
                        continue;
                    }
                    let dst = by_name.get(target.as_str()).ok_or_else(|| KernelError::RoutingUnresolvable {
                        component: name.clone(),
                        target: target.clone(),
                    })?;
                    deliveries
                        .entry(dst.server.clone())
                        .or_default()
                        .push((dst.id.clone(), item.port.clone(), renamed));
                }
            }
        }

        // Phase B: every routed item goes through receiveInput.
        per_server(&mut self.sessions, |addr, client| {
            for (id, from_port, item) in deliveries.get(addr).into_iter().flatten() {
                client.call(
                    "receiveInput",
                    Some(id),
                    json!({ "from_port": from_port, "message": item.value, "to_port": item.port }),
                )?;
            }
            Ok(())
        })?;

        // Phase C: deltfcn on every simulator.
        let done = per_server(&mut self.sessions, |addr, client| {
            let mut out = Vec::new();
            for s in sims.iter().filter(|s| s.server == addr) {
                let r = client.call("deltfcn", Some(&s.id), args.clone())?;
                let tn = parse_time(addr, r.get("tn").unwrap_or(&Value::Null))?;
                out.push((s.name.clone(), tn, parse_record(addr, r.get("record"))?));
            }
            Ok(out)
        })?;
        let mut tns = Vec::new();
        for (name, tn, record) in done.into_iter().flatten() {
            records.extend(record);
            tns.push((name, tn));
        }
        self.apply_tns(tns);

        self.cycle += 1;
        Ok(CycleOutput {
            cycle,
            records: meshdevs_core::kernel::merge_records(records),
            external,
            next_tn: self.global_tn(),
        })
    }
}

impl CycleDriver for RemoteCoordinator {
    type Error = RemoteError;

    fn global_tn(&self) -> SimTime {
        self.sims.iter().map(|s| s.tn).fold(SimTime::INFINITY, SimTime::min)
    }

    fn run_cycle(&mut self, t: SimTime) -> Result<CycleOutput, RemoteError> {
        self.step(t)
    }
}

/// Components each server hosts under `plan`.
pub fn placement(plan: &PartitionPlan) -> BTreeMap<String, Vec<String>> {
    plan.bundles
        .iter()
        .map(|(addr, b): (&String, &ModelDocument)| {
            (addr.clone(), b.component_names().into_iter().map(String::from).collect())
        })
        .collect()
}

//! Brute-force event-calendar simulator used as a reference.
//!
//! It shares nothing with the kernel except the behavior implementations:
//! the hierarchy is flattened to leaves, couplings are resolved into direct
//! leaf-to-leaf routes, and events are pulled from a time-ordered calendar.

use std::collections::{BTreeMap, BTreeSet};

use meshdevs_core::coupled::{Component, CoupledSpec, EXTERNAL};
use meshdevs_core::message::{canonical, ContentItem, MessageBag};
use meshdevs_core::{AtomicSpec, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    /// Time of every cycle, in order (repeats for zero-delay cycles).
    pub cycle_times: Vec<f64>,
    /// Transitions per leaf, keyed by slash-separated path.
    pub transitions: BTreeMap<String, u64>,
    /// Top-level output per cycle time: sorted `(port, canonical value)`.
    pub external: Vec<(f64, Vec<(String, String)>)>,
    /// Set when the cycle bound at one timestamp was hit: `(t, cycles)`.
    pub livelock: Option<(f64, u64)>,
}

impl OracleRun {
    /// Distinct event times in order.
    pub fn event_times(&self) -> Vec<f64> {
        let mut v = self.cycle_times.clone();
        v.dedup();
        v
    }

    /// Top-level output grouped per timestamp as sorted multisets.
    pub fn external_by_time(&self) -> BTreeMap<u64, Vec<(String, String)>> {
        group_by_time(self.external.iter().cloned())
    }
}

pub fn group_by_time(
    events: impl IntoIterator<Item = (f64, Vec<(String, String)>)>,
) -> BTreeMap<u64, Vec<(String, String)>> {
    let mut out: BTreeMap<u64, Vec<(String, String)>> = BTreeMap::new();
    for (t, items) in events {
        if items.is_empty() {
            continue;
        }
        out.entry(t.to_bits()).or_default().extend(items);
    }
    for v in out.values_mut() {
        v.sort();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    LeafOut(usize, String),
    LeafIn(usize, String),
    PortIn(String, String),
    PortOut(String, String),
}

struct Leaf {
    path: String,
    spec: AtomicSpec,
    tl: f64,
    tn: f64,
}

struct Flat {
    leaves: Vec<Leaf>,
    edges: BTreeMap<Node, Vec<Node>>,
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}/{name}")
    }
}

fn flatten(spec: &CoupledSpec, path: &str, flat: &mut Flat) {
    let mut leaf_index = BTreeMap::new();
    for c in &spec.components {
        match c {
            Component::Atomic(a) => {
                leaf_index.insert(a.name.clone(), flat.leaves.len());
                flat.leaves.push(Leaf {
                    path: join(path, &a.name),
                    spec: a.clone(),
                    tl: 0.0,
                    tn: f64::INFINITY,
                });
            }
            Component::Coupled(inner) => flatten(inner, &join(path, &inner.name), flat),
        }
    }
    for c in &spec.couplings {
        let src = if c.src_component == EXTERNAL {
            Node::PortIn(path.to_owned(), c.src_port.clone())
        } else if let Some(&i) = leaf_index.get(&c.src_component) {
            Node::LeafOut(i, c.src_port.clone())
        } else {
            Node::PortOut(join(path, &c.src_component), c.src_port.clone())
        };
        let dst = if c.dst_component == EXTERNAL {
            Node::PortOut(path.to_owned(), c.dst_port.clone())
        } else if let Some(&i) = leaf_index.get(&c.dst_component) {
            Node::LeafIn(i, c.dst_port.clone())
        } else {
            Node::PortIn(join(path, &c.dst_component), c.dst_port.clone())
        };
        flat.edges.entry(src).or_default().push(dst);
    }
}

/// Terminal destinations reachable from `node`: leaf inputs and top-level
/// output ports.
fn resolve(flat: &Flat, node: &Node, out: &mut Vec<Node>) {
    match node {
        Node::LeafIn(..) => out.push(node.clone()),
        Node::PortOut(p, _) if p.is_empty() => out.push(node.clone()),
        _ => {
            for next in flat.edges.get(node).into_iter().flatten() {
                resolve(flat, next, out);
            }
        }
    }
}

fn key(t: f64) -> u64 {
    t.to_bits()
}

/// Runs `spec` from t = 0 through every event time `<= t_end`, stopping
/// after `max_cycles` cycles or when more than `guard` cycles fall on one
/// timestamp.
pub fn run_oracle(spec: &CoupledSpec, t_end: f64, max_cycles: Option<u64>, guard: u64) -> OracleRun {
    let mut flat = Flat {
        leaves: Vec::new(),
        edges: BTreeMap::new(),
    };
    flatten(spec, "", &mut flat);

    let mut calendar: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
    for (i, leaf) in flat.leaves.iter_mut().enumerate() {
        leaf.spec.behavior.init();
        leaf.tl = 0.0;
        leaf.tn = leaf.spec.behavior.time_advance().value();
        if leaf.tn.is_finite() {
            calendar.entry(key(leaf.tn)).or_default().insert(i);
        }
    }

    let mut run = OracleRun {
        cycle_times: Vec::new(),
        transitions: flat.leaves.iter().map(|l| (l.path.clone(), 0)).collect(),
        external: Vec::new(),
        livelock: None,
    };
    let mut same_t = (f64::NAN, 0u64);

    while let Some((&k, _)) = calendar.iter().next() {
        let t = f64::from_bits(k);
        if t > t_end || max_cycles.is_some_and(|m| run.cycle_times.len() as u64 >= m) {
            break;
        }
        if t == same_t.0 {
            if same_t.1 >= guard {
                run.livelock = Some((t, same_t.1));
                break;
            }
            same_t.1 += 1;
        } else {
            same_t = (t, 1);
        }

        let imminent = calendar.remove(&k).unwrap_or_default();
        let mut inbox: BTreeMap<usize, MessageBag> = BTreeMap::new();
        let mut external = Vec::new();
        for &i in &imminent {
            for item in flat.leaves[i].spec.behavior.output().iter() {
                let mut targets = Vec::new();
                resolve(&flat, &Node::LeafOut(i, item.port.clone()), &mut targets);
                for target in targets {
                    match target {
                        Node::LeafIn(j, port) => inbox
                            .entry(j)
                            .or_default()
                            .push(ContentItem::new(port, item.value.clone())),
                        Node::PortOut(_, port) => external.push((port, canonical(&item.value))),
                        _ => unreachable!(),
                    }
                }
            }
        }
        external.sort();
        run.external.push((t, external));

        let active: BTreeSet<usize> = imminent.iter().copied().chain(inbox.keys().copied()).collect();
        for i in active {
            let leaf = &mut flat.leaves[i];
            let elapsed = SimTime::new(t - leaf.tl).expect("time moves forward");
            let bag = inbox.remove(&i);
            match (imminent.contains(&i), bag) {
                (true, Some(x)) => leaf.spec.behavior.delta_con(elapsed, &x),
                (true, None) => leaf.spec.behavior.delta_int(),
                (false, Some(x)) => leaf.spec.behavior.delta_ext(elapsed, &x),
                (false, None) => unreachable!(),
            }
            if leaf.tn.is_finite() && leaf.tn != t {
                if let Some(set) = calendar.get_mut(&key(leaf.tn)) {
                    set.remove(&i);
                    if set.is_empty() {
                        calendar.remove(&key(leaf.tn));
                    }
                }
            }
            leaf.tl = t;
            leaf.tn = t + leaf.spec.behavior.time_advance().value();
            if leaf.tn.is_finite() {
                calendar.entry(key(leaf.tn)).or_default().insert(i);
            }
            *run.transitions.get_mut(&leaf.path).expect("known leaf") += 1;
        }
        run.cycle_times.push(t);
    }
    run
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gpt_hand_calendar, gpt_spec, livelock_spec, wrap};

    #[test]
    fn oracle_reproduces_the_hand_calendar() {
        let run = run_oracle(&gpt_spec(), 100.0, None, 1000);
        assert_eq!(run.event_times(), gpt_hand_calendar());
        assert_eq!(run.transitions["Gen"], 10);
        assert_eq!(run.transitions["Proc"], 19);
        // 9 arrivals + 9 completions + the report, plus the arrival at 100.
        assert_eq!(run.transitions["Trans"], 19);
        let report = &run.external.last().unwrap().1;
        assert_eq!(
            report,
            &vec![("report".to_owned(), r#"{"arrived":9,"solved":9,"throughput":0.09}"#.to_owned())]
        );
    }

    #[test]
    fn oracle_flattens_nested_models() {
        let flat = run_oracle(&gpt_spec(), 100.0, None, 1000);
        let nested = run_oracle(&wrap(&wrap(&gpt_spec(), "inner"), "outer"), 100.0, None, 1000);
        assert_eq!(flat.event_times(), nested.event_times());
        assert_eq!(flat.external_by_time(), nested.external_by_time());
        assert_eq!(nested.transitions["outer/inner/Proc"], 19);
    }

    #[test]
    fn oracle_guard_trips() {
        let run = run_oracle(&livelock_spec(), 10.0, None, 50);
        assert_eq!(run.livelock, Some((0.0, 50)));
        assert_eq!(run.cycle_times.len(), 50);
    }
}

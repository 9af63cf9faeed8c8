//! Seeded random coupled models over the built-in behavior library.
//!
//! Every model has 2 to 5 components, component 0 is a generator, couplings
//! run forward plus at most one feedback edge into a processor or buffer,
//! and every output port is also wired to the top level. All delays are
//! positive multiples of 0.25 so that sums stay exact.

use std::collections::BTreeMap;

use meshdevs_core::coupled::Coupling;
use meshdevs_core::model::{ComponentEntry, ModelDocument};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Generator,
    Processor,
    Buffer,
    Transducer,
}

impl Kind {
    fn behavior(self) -> &'static str {
        match self {
            Kind::Generator => "generator",
            Kind::Processor => "processor",
            Kind::Buffer => "buffer",
            Kind::Transducer => "transducer",
        }
    }

    fn inputs(self) -> &'static [&'static str] {
        match self {
            Kind::Generator => &[],
            Kind::Processor | Kind::Buffer => &["in"],
            Kind::Transducer => &["arrived", "solved"],
        }
    }

    fn output(self) -> &'static str {
        match self {
            Kind::Transducer => "report",
            _ => "out",
        }
    }
}

fn quarter(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    rng.gen_range(lo..=hi) as f64 * 0.25
}

fn params(kind: Kind, rng: &mut ChaCha8Rng) -> serde_json::Map<String, Value> {
    let v = match kind {
        Kind::Generator => json!({ "period": quarter(rng, 6, 40) }),
        Kind::Processor => json!({ "service_time": quarter(rng, 1, 24) }),
        Kind::Buffer => json!({ "delay": quarter(rng, 1, 16) }),
        Kind::Transducer => json!({ "observation_time": quarter(rng, 80, 240) }),
    };
    match v {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

/// A flat random model for `seed`.
pub fn random_model(seed: u64) -> ModelDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let mut kinds = vec![Kind::Generator];
    for _ in 1..n {
        let k = *[Kind::Processor, Kind::Processor, Kind::Buffer, Kind::Transducer, Kind::Generator]
            .choose(&mut rng)
            .expect("non-empty");
        kinds.push(k);
    }

    let mut doc = ModelDocument::new(format!("random{seed}"));
    let names: Vec<String> = (0..n).map(|i| format!("C{i}")).collect();
    for (name, kind) in names.iter().zip(&kinds) {
        doc.components
            .push(ComponentEntry::atomic(name, kind.behavior(), params(*kind, &mut rng)));
    }

    // Forward edges: every component with inputs hears from an earlier one.
    for j in 1..n {
        for port in kinds[j].inputs() {
            if rng.gen_bool(0.8) || *port == kinds[j].inputs()[0] {
                let i = rng.gen_range(0..j);
                doc.couplings
                    .push(Coupling::new(&names[i], kinds[i].output(), &names[j], port));
            }
        }
    }
    // One feedback edge into a processor or buffer, when there is one.
    let targets: Vec<usize> = (0..n)
        .filter(|&j| matches!(kinds[j], Kind::Processor | Kind::Buffer))
        .collect();
    if let Some(&j) = targets.choose(&mut rng) {
        let later: Vec<usize> = (j..n).filter(|&i| kinds[i] != Kind::Transducer).collect();
        if let Some(&i) = later.choose(&mut rng) {
            doc.couplings.push(Coupling::new(&names[i], "out", &names[j], "in"));
        }
    }
    for (i, name) in names.iter().enumerate() {
        doc.couplings
            .push(Coupling::new(name, kinds[i].output(), "EXTERNAL", &format!("o{i}")));
    }
    doc.couplings.sort();
    doc.couplings.dedup();
    doc
}

/// Moves `members` of a flat document into a nested coupled component
/// `group`, rewiring couplings through its ports. Top-level outputs are
/// unchanged.
pub fn group(doc: &ModelDocument, members: &[&str], group: &str) -> ModelDocument {
    let inside = |c: &str| members.contains(&c);
    let mut inner = ModelDocument::new(group);
    let mut outer = ModelDocument::new(doc.name.clone());
    for entry in &doc.components {
        if inside(entry.name()) {
            inner.components.push(entry.clone());
        } else {
            outer.components.push(entry.clone());
        }
    }
    for c in &doc.couplings {
        match (inside(&c.src_component), inside(&c.dst_component)) {
            (true, true) => inner.couplings.push(c.clone()),
            (false, false) => outer.couplings.push(c.clone()),
            (false, true) => {
                let port = format!("i_{}_{}", c.dst_component, c.dst_port);
                inner
                    .couplings
                    .push(Coupling::new("EXTERNAL", &port, &c.dst_component, &c.dst_port));
                outer
                    .couplings
                    .push(Coupling::new(&c.src_component, &c.src_port, group, &port));
            }
            (true, false) => {
                let port = format!("o_{}_{}", c.src_component, c.src_port);
                inner
                    .couplings
                    .push(Coupling::new(&c.src_component, &c.src_port, "EXTERNAL", &port));
                outer
                    .couplings
                    .push(Coupling::new(group, &port, &c.dst_component, &c.dst_port));
            }
        }
    }
    inner.couplings.sort();
    inner.couplings.dedup();
    outer.couplings.sort();
    outer.couplings.dedup();
    outer.components.push(ComponentEntry::Coupled {
        name: group.to_owned(),
        coupled: Box::new(inner),
    });
    outer
}

/// A random model with a random non-empty proper subset of its components
/// grouped into a nested model named `G`.
pub fn random_nested_model(seed: u64) -> ModelDocument {
    let flat = random_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let names: Vec<&str> = flat.component_names();
    let k = rng.gen_range(1..names.len());
    let members: Vec<&str> = names.choose_multiple(&mut rng, k).copied().collect();
    group(&flat, &members, "G")
}

/// Assigns each top-level component to one of `servers`.
pub fn random_assignment(doc: &ModelDocument, servers: &[String], seed: u64) -> BTreeMap<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    doc.component_names()
        .into_iter()
        .map(|c| (c.to_owned(), servers.choose(&mut rng).expect("servers").clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use meshdevs_core::model::validate_model;

    #[test]
    fn random_models_validate() {
        for seed in 0..200 {
            let doc = random_model(seed);
            validate_model(&doc).unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
            let nested = random_nested_model(seed);
            validate_model(&nested).unwrap_or_else(|e| panic!("nested seed {seed}: {e:?}"));
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(random_model(7), random_model(7));
    }
}

//! Fixture models shared by the test suites.

use meshdevs_core::coupled::CoupledSpec;
use meshdevs_core::model::{elaborate, parse_model, ModelDocument};
use meshdevs_core::SimTime;

/// Generator (period 10) feeding a processor (service 2.5), both observed
/// by a transducer that reports at t = 100.
pub const GPT_JSON: &str = r#"{
  "name": "gpt",
  "version": "1",
  "components": [
    {"name": "Gen", "behavior": "generator", "params": {"period": 10}},
    {"name": "Proc", "behavior": "processor", "params": {"service_time": 2.5}},
    {"name": "Trans", "behavior": "transducer", "params": {"observation_time": 100}}
  ],
  "couplings": [
    ["Gen", "out", "Proc", "in"],
    ["Gen", "out", "Trans", "arrived"],
    ["Proc", "out", "Trans", "solved"],
    ["Trans", "report", "EXTERNAL", "report"]
  ]
}
"#;

/// Two zero-delay buffers in a loop with one job circulating.
pub const LIVELOCK_JSON: &str = r#"{
  "name": "pingpong",
  "version": "1",
  "components": [
    {"name": "A", "behavior": "buffer", "params": {"delay": 0, "initial": [1]}},
    {"name": "B", "behavior": "buffer", "params": {"delay": 0}}
  ],
  "couplings": [
    ["A", "out", "B", "in"],
    ["B", "out", "A", "in"]
  ]
}
"#;

/// Event times of the GPT run up to t = 100, worked out by hand: jobs leave
/// the generator every 10 and the processor 2.5 later; the transducer fires
/// once at 100.
pub fn gpt_hand_calendar() -> Vec<f64> {
    let mut times = Vec::new();
    for k in 1..=9 {
        let arrival = 10.0 * k as f64;
        times.push(arrival);
        times.push(arrival + 2.5);
    }
    times.push(100.0);
    times
}

pub fn gpt_document() -> ModelDocument {
    parse_model(GPT_JSON).expect("GPT fixture parses")
}

pub fn gpt_spec() -> CoupledSpec {
    elaborate(&gpt_document()).expect("GPT fixture elaborates")
}

pub fn livelock_document() -> ModelDocument {
    parse_model(LIVELOCK_JSON).expect("livelock fixture parses")
}

pub fn livelock_spec() -> CoupledSpec {
    elaborate(&livelock_document()).expect("livelock fixture elaborates")
}

/// `model` wrapped as the single component of a new top level, with every
/// output forwarded.
pub fn wrap(model: &CoupledSpec, name: &str) -> CoupledSpec {
    let mut outer = CoupledSpec::new(format!("{name}_top"));
    let mut inner = model.clone();
    inner.name = name.to_owned();
    for port in &model.output_ports {
        outer = outer.with_output(port).with_coupling(name, port, "EXTERNAL", port);
    }
    for port in &model.input_ports {
        outer = outer.with_input(port).with_coupling("EXTERNAL", port, name, port);
    }
    outer.with_component(inner)
}

pub fn t(v: f64) -> SimTime {
    SimTime::new(v).expect("valid time")
}

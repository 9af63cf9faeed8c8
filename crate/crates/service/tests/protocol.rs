mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::thread;

use common::{connect, eventually, start};
use meshdevs_core::message::MessageBag;
use meshdevs_service::handler::{handle_request, Session};
use meshdevs_service::wire::OPS;
use meshdevs_service::{parse_request, ClientError, Request, Response, ServiceRegistry};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn processor() -> Value {
    json!({ "name": "Processor", "behavior": "processor", "params": { "service_time": 2.5 } })
}

fn remote_code(e: ClientError) -> String {
    e.code().to_owned()
}

#[test]
fn get_ip_echoes_the_bound_address() {
    let h = start();
    let mut c = connect(&h);
    assert_eq!(c.call("getIp", None, json!({})).unwrap(), json!(h.addr().to_string()));
}

#[test]
fn simulator_lifecycle_over_the_wire() {
    let h = start();
    let mut c = connect(&h);
    let id = c
        .call("newSimulator", None, json!({ "component": processor(), "client": "192.168.1.2" }))
        .unwrap();
    assert_eq!(id, json!("Processor@192.168.1.2"));
    let sim = Some("Processor@192.168.1.2");

    assert_eq!(c.call("initialize", sim, json!({ "t": 0 })).unwrap(), json!("inf"));
    assert_eq!(c.call("getOutput", sim, json!({})).unwrap(), json!([]));
    c.call("receiveInput", sim, json!({ "from_port": "out", "message": 7, "to_port": "in" }))
        .unwrap();
    let d = c.call("deltfcn", sim, json!({ "t": 10, "cycle": 0 })).unwrap();
    assert_eq!(d["tn"], json!(12.5));
    assert_eq!(d["kind"], json!("external"));
    assert_eq!(c.call("getTN", sim, json!({})).unwrap(), json!(12.5));

    let l = c.call("lambda", sim, json!({ "t": 12.5, "cycle": 1 })).unwrap();
    let expected = serde_json::to_value(MessageBag::single("out", 7)).unwrap();
    assert_eq!(l["output"], expected);
    assert_eq!(c.call("getOutput", sim, json!({})).unwrap(), expected);
    let d = c.call("deltfcn", sim, json!({ "t": 12.5, "cycle": 1 })).unwrap();
    assert_eq!((d["tn"].clone(), d["kind"].clone()), (json!("inf"), json!("internal")));

    let dup = c
        .call("newSimulator", None, json!({ "component": processor(), "client": "192.168.1.2" }))
        .unwrap_err();
    assert_eq!(remote_code(dup), "DuplicateSimulator");

    c.call("exit", sim, json!({})).unwrap();
    assert_eq!(remote_code(c.call("getTN", sim, json!({})).unwrap_err()), "UnknownSimulator");

    let console = c.call("getConsole", None, json!({ "client": "192.168.1.2" })).unwrap();
    let console = console.as_str().unwrap();
    assert!(console.contains("newSimulator"), "{console}");
    assert!(console.contains("-> UnknownSimulator"), "{console}");
}

#[test]
fn error_codes() {
    let h = start();
    let mut c = connect(&h);
    let code = |r: Result<Value, ClientError>| remote_code(r.unwrap_err());
    assert_eq!(code(c.call("getTN", Some("Nope@x"), json!({}))), "UnknownSimulator");
    assert_eq!(code(c.call("fly", None, json!({}))), "UnknownOp");
    assert_eq!(code(c.call("initialize", None, json!({ "t": 0 }))), "BadArgs");
    let bad = json!({ "name": "X", "behavior": "teleporter" });
    assert_eq!(
        code(c.call("newSimulator", None, json!({ "component": bad, "client": "c" }))),
        "UnknownBehavior"
    );
    assert_eq!(
        code(c.call("simulateCentralized", None, json!({ "model": "none-1", "mode": {"until": 1} }))),
        "UnknownModel"
    );
    let r = c.raw("{\"op\":\"getIp\"").unwrap();
    assert_eq!((r.seq, r.error.unwrap().code.as_str()), (None, "BadRequest"));
}

#[test]
fn session_close_reclaims_its_simulators() {
    let h = start();
    {
        let mut c = connect(&h);
        c.call("newSimulator", None, json!({ "component": processor(), "client": "a" }))
            .unwrap();
        c.call("newSimulator", None, json!({ "component": processor(), "client": "b" }))
            .unwrap();
        c.call("exit", Some("Processor@b"), json!({})).unwrap();
        assert_eq!(h.registry().simulator_ids(), vec!["Processor@a".to_owned()]);
    }
    assert!(eventually(|| h.registry().simulator_ids().is_empty()));
}

#[test]
fn shutdown_drains_the_registry() {
    let h = start();
    let mut c = connect(&h);
    c.call("newSimulator", None, json!({ "component": processor(), "client": "a" }))
        .unwrap();
    let reg = h.registry().clone();
    h.shutdown();
    assert!(reg.simulator_ids().is_empty());
    assert!(c.call("getIp", None, json!({})).is_err());
}

#[test]
fn idle_simulators_expire_after_the_ttl() {
    let h = meshdevs_service::serve_with("127.0.0.1:0", None, Some(std::time::Duration::from_millis(50))).unwrap();
    let mut c = connect(&h);
    c.call("newSimulator", None, json!({ "component": processor(), "client": "a" }))
        .unwrap();
    thread::sleep(std::time::Duration::from_millis(120));
    let err = c.call("getTN", Some("Processor@a"), json!({})).unwrap_err();
    assert_eq!(err.code(), "UnknownSimulator");
}

/// Drives one processor through `jobs` arrivals and completions, checking
/// every answer.
fn drive_processor(addr: &str, client: &str, jobs: u32) {
    let mut c = meshdevs_service::Client::connect(addr).unwrap();
    let id = c
        .call("newSimulator", None, json!({ "component": processor(), "client": client }))
        .unwrap();
    let sim = id.as_str();
    c.call("initialize", sim, json!({ "t": 0 })).unwrap();
    for k in 0..jobs {
        let t0 = 10.0 * (k + 1) as f64;
        // Every cycle opens with the output phase, which unseals the
        // simulator for new input.
        let l = c.call("lambda", sim, json!({ "t": t0, "cycle": 2 * k })).unwrap();
        assert_eq!(l["output"], json!([]));
        c.call("receiveInput", sim, json!({ "from_port": "out", "message": [client, k], "to_port": "in" }))
            .unwrap();
        let d = c.call("deltfcn", sim, json!({ "t": t0, "cycle": 2 * k })).unwrap();
        assert_eq!(d["tn"], json!(t0 + 2.5));
        let l = c.call("lambda", sim, json!({ "t": t0 + 2.5, "cycle": 2 * k + 1 })).unwrap();
        assert_eq!(l["output"], json!([["out", [client, k]]]));
        c.call("deltfcn", sim, json!({ "t": t0 + 2.5, "cycle": 2 * k + 1 })).unwrap();
    }
    c.call("exit", sim, json!({})).unwrap();
}

#[test]
fn concurrent_clients_do_not_interfere() {
    let h = start();
    let addr = h.addr().to_string();
    thread::scope(|s| {
        for client in ["alice", "bob", "carol"] {
            let addr = &addr;
            s.spawn(move || drive_processor(addr, client, 150));
        }
    });
    assert!(h.registry().simulator_ids().is_empty());
    for client in ["alice", "bob", "carol"] {
        let console = h.registry().console(client);
        assert_eq!(console.lines().count(), 3 + 5 * 150, "{client}");
    }
}

fn random_line(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let seq = rng.gen_range(-5i64..1_000_000);
    let op = if rng.gen_bool(0.9) {
        OPS[rng.gen_range(0..OPS.len())].to_owned()
    } else {
        "bogus".to_owned()
    };
    let sims = ["Processor@fz", "Gen@fz", "X@y", "", "@"];
    let shape = rng.gen_range(0..4);
    let valid = || {
        let args = match shape {
            0 => json!({}),
            1 => json!({ "t": 1.5, "cycle": 0 }),
            2 => json!({ "component": processor(), "client": "fz" }),
            _ => json!({ "from_port": "out", "to_port": "in", "message": [1, {"k": "v"}] }),
        };
        json!({ "op": op, "sim": sims[seq.unsigned_abs() as usize % sims.len()], "args": args, "seq": seq })
            .to_string()
    };
    let base = valid();
    match rng.gen_range(0..9) {
        0 | 1 => base.into_bytes(),
        2 => {
            let cut = rng.gen_range(0..base.len());
            base.as_bytes()[..cut].to_vec()
        }
        3 => {
            // Two requests run together on one line.
            let mut b = base.clone().into_bytes();
            b.extend_from_slice(base.as_bytes());
            b
        }
        4 => (0..rng.gen_range(1..80))
            .map(|_| rng.gen::<u8>())
            .filter(|b| *b != b'\n')
            .collect(),
        5 => json!({ "op": op, "seq": "seven", "args": {} }).to_string().into_bytes(),
        6 => json!({ "op": op, "seq": seq, "args": [1, 2] }).to_string().into_bytes(),
        7 => json!({ "op": op, "seq": seq, "extra": true }).to_string().into_bytes(),
        _ => {
            let mut b = base.into_bytes();
            let i = rng.gen_range(0..b.len());
            b[i] = rng.gen();
            b.retain(|c| *c != b'\n');
            b
        }
    }
}

fn expects_response(line: &[u8]) -> bool {
    !matches!(std::str::from_utf8(line), Ok(s) if s.trim().is_empty())
}

#[test]
fn fuzzed_lines_get_one_well_formed_response_each() {
    let h = start();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let stream = TcpStream::connect(h.addr()).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let mut well_formed = 0;
    for _ in 0..10_000 {
        let mut line = random_line(&mut rng);
        line.push(b'\n');
        writer.write_all(&line).unwrap();
        if !expects_response(&line) {
            continue;
        }
        let mut buf = String::new();
        reader.read_line(&mut buf).unwrap();
        let resp: Response = serde_json::from_str(&buf).unwrap_or_else(|e| panic!("bad response {buf:?}: {e}"));
        match std::str::from_utf8(&line).ok().map(|s| parse_request(s.trim())) {
            Some(Ok(req)) => {
                well_formed += 1;
                assert_eq!(resp.seq, Some(req.seq));
                assert_eq!(resp.ok, resp.error.is_none());
            }
            _ => assert_eq!(resp.error.map(|e| e.code), Some("BadRequest".to_owned())),
        }
    }
    assert!(well_formed > 1000, "only {well_formed} well-formed requests generated");
    let mut c = connect(&h);
    assert_eq!(c.call("getIp", None, json!({})).unwrap(), json!(h.addr().to_string()));
}

#[test]
fn pipelined_requests_are_answered_in_order() {
    let h = start();
    let stream = TcpStream::connect(h.addr()).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut batch = String::new();
    for seq in 0..200 {
        batch.push_str(&request_line(&Request::new("getIp", None, json!({}), seq)));
        if seq % 7 == 0 {
            batch.push_str("\n   \n{broken\n");
        }
    }
    writer.write_all(batch.as_bytes()).unwrap();
    let mut reader = BufReader::new(stream);
    let mut next = 0;
    for _ in 0..(200 + 29) {
        let mut buf = String::new();
        reader.read_line(&mut buf).unwrap();
        let r: Response = serde_json::from_str(&buf).unwrap();
        match r.seq {
            Some(s) => {
                assert_eq!(s, next);
                next += 1;
            }
            None => assert_eq!(r.error.unwrap().code, "BadRequest"),
        }
    }
    assert_eq!(next, 200);
}

fn request_line(req: &Request) -> String {
    let mut s = serde_json::to_string(req).unwrap();
    s.push('\n');
    s
}

#[derive(Debug, Clone)]
enum Step {
    Receive(u8),
    Transition(u8),
    Output,
}

fn step() -> impl Strategy<Value = (usize, Step)> {
    (
        0usize..3,
        prop_oneof![
            any::<u8>().prop_map(Step::Receive),
            any::<u8>().prop_map(Step::Transition),
            Just(Step::Output),
        ],
    )
}

/// Answers of `client` to its own steps, run against `reg`.
fn play(reg: &ServiceRegistry, session: &mut Session, steps: &[(usize, Step)], only: Option<usize>) -> BTreeMap<usize, Vec<Response>> {
    let mut answers: BTreeMap<usize, Vec<Response>> = BTreeMap::new();
    let mut clocks = [0.0f64; 3];
    for client in 0..3 {
        if only.is_some_and(|o| o != client) {
            continue;
        }
        let name = format!("c{client}");
        handle_request(reg, session, Request::new("newSimulator", None, json!({ "component": processor(), "client": name }), 0));
        handle_request(reg, session, Request::new("initialize", Some(&format!("Processor@{name}")), json!({ "t": 0 }), 0));
    }
    for (seq, (client, step)) in steps.iter().enumerate() {
        if only.is_some_and(|o| o != *client) {
            continue;
        }
        let sim = format!("Processor@c{client}");
        let clock = &mut clocks[*client];
        let (op, args) = match step {
            Step::Receive(v) => ("receiveInput", json!({ "from_port": "x", "to_port": "in", "message": v })),
            Step::Transition(dt) => {
                *clock += f64::from(*dt % 4);
                ("deltfcn", json!({ "t": *clock, "cycle": seq }))
            }
            Step::Output => ("lambda", json!({ "t": *clock, "cycle": seq })),
        };
        let r = handle_request(reg, session, Request::new(op, Some(&sim), args, seq as i64));
        answers.entry(*client).or_default().push(r);
    }
    answers
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interleaved_clients_match_isolated_runs(steps in prop::collection::vec(step(), 0..60)) {
        let shared = ServiceRegistry::new("127.0.0.1:1");
        let mut session = Session::new("p");
        let together = play(&shared, &mut session, &steps, None);
        for client in 0..3 {
            let alone_reg = ServiceRegistry::new("127.0.0.1:1");
            let mut alone_session = Session::new("p");
            let alone = play(&alone_reg, &mut alone_session, &steps, Some(client));
            prop_assert_eq!(together.get(&client), alone.get(&client));
        }
    }
}

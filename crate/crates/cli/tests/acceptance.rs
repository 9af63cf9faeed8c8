//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::any::Any;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use meshdevs_cli::{cmd_run, cmd_run_dist, Horizon, RunConfig};
use meshdevs_core::atomic::{dispatch, AtomicSpec, Behavior, TransitionKind};
use meshdevs_core::coupled::{CoupledSpec, EXTERNAL};
use meshdevs_core::frame::{attach_observer, build_frame};
use meshdevs_core::kernel::{Coordinator, KernelConfig, RecordKind, RunPlan, RunSummary, RunStatus, TraceRecord};
use meshdevs_core::message::MessageBag;
use meshdevs_core::model::{elaborate, serialize_model, ModelDocument};
use meshdevs_core::{digraph_to_atomic, Error, SimTime};
use meshdevs_service::wire::OPS;
use meshdevs_service::{parse_request, serve, Response};
use meshdevs_testkit::{
    gpt_document, gpt_hand_calendar, gpt_spec, livelock_spec, random_assignment, random_model, random_nested_model,
    run_oracle, summary_external,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn t(v: f64) -> SimTime {
    SimTime::new(v).unwrap()
}

fn run_spec(spec: &CoupledSpec, until: f64) -> RunSummary {
    let mut c = Coordinator::new(spec.clone(), KernelConfig::default()).unwrap();
    c.initialize(SimTime::ZERO);
    c.run_until(t(until)).unwrap()
}

// 1 ---------------------------------------------------------------------

#[derive(Clone, Default)]
struct Probe {
    ta: f64,
    last: Option<TransitionKind>,
}

impl Behavior for Probe {
    fn init(&mut self) {}
    fn delta_int(&mut self) {
        self.last = Some(TransitionKind::Internal);
    }
    fn delta_ext(&mut self, _e: SimTime, _x: &MessageBag) {
        self.last = Some(TransitionKind::External);
    }
    fn delta_con(&mut self, _e: SimTime, _x: &MessageBag) {
        self.last = Some(TransitionKind::Confluent);
    }
    fn output(&self) -> MessageBag {
        MessageBag::new()
    }
    fn time_advance(&self) -> SimTime {
        t(self.ta)
    }
    fn clone_box(&self) -> Box<dyn Behavior> {
        Box::new(self.clone())
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

fn dispatch_conformance() -> Outcome {
    let times = [
        (0.0, 0.0, 4.0),
        (0.0, 1.5, 4.0),
        (0.0, 4.0, 4.0),
        (3.0, 3.0, 3.0),
        (2.5, 2.5, 9.0),
        (1.0, 8.75, 8.75),
        (0.0, 0.0, 0.0),
        (5.0, 6.0, 1e12),
    ];
    let mut n = 0;
    for (tl, now, tn) in times {
        for input in [false, true] {
            for ta in [0.0, 2.0] {
                let mut m = AtomicSpec::new("p", ["in"], ["out"], Box::new(Probe { ta, last: None }));
                let mut bag = Some(if input { MessageBag::single("in", 1) } else { MessageBag::new() });
                let d = dispatch(&mut m, &mut bag, t(now), t(tl), t(tn)).map_err(|e| e.to_string())?;
                let expected = match (input, now == tn) {
                    (false, false) => TransitionKind::NoOp,
                    (false, true) => TransitionKind::Internal,
                    (true, false) => TransitionKind::External,
                    (true, true) => TransitionKind::Confluent,
                };
                ensure!(d.kind == expected, "tl={tl} t={now} tn={tn} input={input}: got {:?}", d.kind);
                ensure!(d.elapsed == t(now - tl), "elapsed at tl={tl} t={now}");
                let ran = m.behavior_as::<Probe>().unwrap().last;
                let expected_call = (expected != TransitionKind::NoOp).then_some(expected);
                ensure!(ran == expected_call, "ran {ran:?} for {expected:?}");
                n += 1;
            }
        }
    }
    Ok(format!("{n} scenarios"))
}

// 2 ---------------------------------------------------------------------

fn protocol_cycle() -> Outcome {
    let s = run_spec(&gpt_spec(), 100.0);
    let times: Vec<f64> = s.event_times().iter().map(|t| t.value()).collect();
    ensure!(times == gpt_hand_calendar(), "event times {times:?}");
    let report = &s.last_outputs()["report"];
    ensure!(report["arrived"] == json!(9) && report["solved"] == json!(9), "report {report}");
    let tp = report["throughput"].as_f64().unwrap_or(f64::NAN);
    let close = (tp - 0.09).abs() <= 1e-12;
    ensure!(close, "throughput {tp}");
    Ok(format!("{} event times, throughput {tp}", times.len()))
}

// 3 ---------------------------------------------------------------------

/// `spec` closed into one atomic model inside a fresh top level.
fn closed(spec: &CoupledSpec) -> CoupledSpec {
    let atomic = digraph_to_atomic(spec).unwrap();
    let mut outer = CoupledSpec::new(format!("{}_closed", spec.name));
    for port in &spec.output_ports {
        outer = outer.with_output(port).with_coupling(&spec.name, port, EXTERNAL, port);
    }
    outer.with_component(atomic)
}

fn closure() -> Outcome {
    let gpt = gpt_spec();
    let base = summary_external(&run_spec(&gpt, 100.0));
    ensure!(summary_external(&run_spec(&closed(&gpt), 100.0)) == base, "GPT closed once");
    ensure!(summary_external(&run_spec(&closed(&closed(&gpt)), 100.0)) == base, "GPT closed twice");
    for seed in 0..120 {
        let spec = elaborate(&random_model(seed)).unwrap();
        let base = summary_external(&run_spec(&spec, 50.0));
        ensure!(summary_external(&run_spec(&closed(&spec), 50.0)) == base, "seed {seed} closed once");
        ensure!(
            summary_external(&run_spec(&closed(&closed(&spec)), 50.0)) == base,
            "seed {seed} closed twice"
        );
    }
    Ok("GPT + 120 random seeds".into())
}

// 4 ---------------------------------------------------------------------

fn with_assignment(doc: &ModelDocument, assignment: BTreeMap<String, String>) -> ModelDocument {
    let mut doc = doc.clone();
    doc.assignment = Some(assignment);
    doc
}

fn compare_transport(dir: &Path, label: &str, doc: &ModelDocument, until: f64) -> Result<(), String> {
    let model = dir.join(format!("{label}.json"));
    fs::write(&model, serialize_model(doc)).unwrap();
    let (local, dist) = (dir.join(format!("{label}.local")), dir.join(format!("{label}.dist")));
    let mut c = RunConfig::new(&model, Horizon::Until(until));
    c.trace = Some(local.clone());
    ensure!(cmd_run(&c, &mut Vec::new()) == 0, "{label}: cmd_run failed");
    c.trace = Some(dist.clone());
    let code = cmd_run_dist(&c, &mut Vec::new());
    ensure!(code == 0, "{label}: cmd_run_dist exit {code}");
    let (a, b) = (fs::read(&local).unwrap(), fs::read(&dist).unwrap());
    ensure!(!a.is_empty() && a == b, "{label}: trace files differ");
    Ok(())
}

fn transport_transparency() -> Outcome {
    let dir = TempDir::new().unwrap();
    let daemons: Vec<_> = (0..3).map(|_| serve("127.0.0.1:0", None).unwrap()).collect();
    let addrs: Vec<String> = daemons.iter().map(|d| d.self_address().to_owned()).collect();
    let gpt = gpt_document();
    let mut runs = 0;
    for n in [2, 3] {
        let pool = &addrs[..n];
        let layouts = [
            [0, 1, 0],
            [1, 0, 1],
            [0, 1, n - 1],
            [n - 1, n - 1, 0],
        ];
        for (i, layout) in layouts.iter().enumerate() {
            let assignment = ["Gen", "Proc", "Trans"]
                .iter()
                .zip(layout)
                .map(|(c, s)| (c.to_string(), pool[*s].clone()))
                .collect();
            compare_transport(dir.path(), &format!("gpt-{n}-{i}"), &with_assignment(&gpt, assignment), 100.0)?;
            runs += 1;
        }
    }
    for seed in 0..120u64 {
        let pool = &addrs[..2 + (seed as usize % 2)];
        let doc = if seed % 4 == 3 { random_nested_model(seed) } else { random_model(seed) };
        let doc = with_assignment(&doc, random_assignment(&doc, pool, seed));
        compare_transport(dir.path(), &format!("seed-{seed}"), &doc, 50.0)?;
        runs += 1;
    }
    Ok(format!("{runs} byte-identical trace pairs on 2 and 3 daemons"))
}

// 5 ---------------------------------------------------------------------

fn transition_counts(s: &RunSummary) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in s.trace.iter().filter(|r| r.kind == RecordKind::Transition) {
        *counts.entry(r.component.clone()).or_insert(0) += 1;
    }
    counts
}

fn oracle_equivalence() -> Outcome {
    let mut fixtures = vec![("gpt".to_owned(), gpt_spec(), 100.0)];
    for seed in 0..150 {
        fixtures.push((format!("seed {seed}"), elaborate(&random_model(seed)).unwrap(), 60.0));
    }
    for (label, spec, until) in &fixtures {
        let k = run_spec(spec, *until);
        let o = run_oracle(spec, *until, None, 1000);
        let times: Vec<f64> = k.event_times().iter().map(|t| t.value()).collect();
        ensure!(times == o.event_times(), "{label}: event times");
        let mut expected = o.transitions.clone();
        expected.retain(|_, n| *n > 0);
        ensure!(transition_counts(&k) == expected, "{label}: transition counts");
    }
    let o = run_oracle(&livelock_spec(), 5.0, None, 1000);
    let mut c = Coordinator::new(livelock_spec(), KernelConfig::default()).unwrap();
    c.initialize(SimTime::ZERO);
    let err = c.run_until(t(5.0)).unwrap_err();
    let (ot, oc) = o.livelock.ok_or("oracle saw no livelock")?;
    ensure!(err == Error::ZeroDelayLivelock { t: t(ot), cycles: oc }, "livelock fixture: {err}");
    Ok(format!("{} fixtures", fixtures.len() + 1))
}

// 6 ---------------------------------------------------------------------

fn realtime_fidelity() -> Outcome {
    let gpt = || {
        let mut c = Coordinator::new(gpt_spec(), KernelConfig::default()).unwrap();
        c.initialize(SimTime::ZERO);
        c
    };
    let virt = gpt().run_until(t(30.0)).unwrap();
    let real = gpt().run_realtime(0.01, t(30.0)).unwrap();
    let logical: Vec<TraceRecord> = real.trace.iter().map(|r| r.logical()).collect();
    ensure!(logical == virt.trace, "logical trace differs from virtual run");
    let mut late: Vec<f64> = real
        .trace
        .iter()
        .filter(|r| (r.wall_ms.unwrap_or(f64::INFINITY) - 10.0 * r.t.value()).abs() > 20.0)
        .map(|r| r.t.value())
        .collect();
    late.dedup();
    ensure!(late.len() <= 1, "events off schedule at {late:?}");
    ensure!(real.deadline_misses.len() <= 1, "deadline misses {:?}", real.deadline_misses);
    let worst = real
        .trace
        .iter()
        .map(|r| (r.wall_ms.unwrap_or(0.0) - 10.0 * r.t.value()).abs())
        .fold(0.0, f64::max);
    Ok(format!(
        "{} events, worst offset {worst:.2} ms, {} deadline misses",
        real.event_times().len(),
        real.deadline_misses.len()
    ))
}

// 7 ---------------------------------------------------------------------

fn fuzz_line(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let seq = rng.gen_range(0i64..1 << 40);
    let op = OPS[rng.gen_range(0..OPS.len())];
    let args = match rng.gen_range(0..3) {
        0 => json!({}),
        1 => json!({ "t": rng.gen_range(0.0..50.0), "cycle": 1 }),
        _ => json!({ "component": {"name": "P", "behavior": "processor", "params": {"service_time": 1}}, "client": "fz" }),
    };
    let good = json!({ "op": op, "sim": "P@fz", "args": args, "seq": seq }).to_string().into_bytes();
    let mut line = match rng.gen_range(0..6) {
        0 | 1 => good,
        2 => good[..rng.gen_range(0..good.len())].to_vec(),
        3 => [good.clone(), good].concat(),
        4 => (0..rng.gen_range(1..64)).map(|_| rng.gen()).collect(),
        _ => {
            let mut g = good;
            let i = rng.gen_range(0..g.len());
            g[i] = rng.gen();
            g
        }
    };
    line.retain(|b| *b != b'\n');
    line
}

fn wire_robustness() -> Outcome {
    let daemon = serve("127.0.0.1:0", None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let stream = TcpStream::connect(daemon.addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let (mut well_formed, mut malformed) = (0, 0);
    for i in 0..10_000 {
        let mut line = fuzz_line(&mut rng);
        let text = std::str::from_utf8(&line).ok().map(str::to_owned);
        if matches!(&text, Some(s) if s.trim().is_empty()) {
            continue;
        }
        line.push(b'\n');
        writer.write_all(&line).map_err(|e| format!("line {i}: daemon gone: {e}"))?;
        let mut buf = String::new();
        reader.read_line(&mut buf).map_err(|e| format!("line {i}: {e}"))?;
        let resp: Response = serde_json::from_str(&buf).map_err(|e| format!("line {i}: bad response {buf:?}: {e}"))?;
        match text.as_deref().map(|s| parse_request(s.trim())) {
            Some(Ok(req)) => {
                well_formed += 1;
                ensure!(resp.seq == Some(req.seq), "line {i}: seq {:?} for {}", resp.seq, req.seq);
            }
            _ => {
                malformed += 1;
                ensure!(!resp.ok, "line {i}: malformed line accepted");
            }
        }
    }
    let mut probe = meshdevs_service::Client::connect(&daemon.addr().to_string()).map_err(|e| e.to_string())?;
    probe.call("getIp", None, json!({})).map_err(|e| e.to_string())?;
    Ok(format!("{well_formed} well-formed, {malformed} malformed, daemon alive"))
}

// 8 ---------------------------------------------------------------------

fn sut_records(trace: &[TraceRecord], frame: &str) -> Vec<TraceRecord> {
    trace
        .iter()
        .filter(|r| !r.component.starts_with(frame))
        .map(|r| TraceRecord { cycle: 0, ..r.logical() })
        .collect()
}

fn frame_transparency() -> Outcome {
    let base = run_spec(&gpt_spec(), 100.0);
    let metrics: Vec<String> = ["count", "throughput", "mean_turnaround", "max_turnaround"].map(String::from).into();
    for target in ["Gen", "Proc", "Trans"] {
        let frame = build_frame("ef", None, &metrics, None).map_err(|e| e.to_string())?;
        let spec = attach_observer(&gpt_spec(), target, &frame).map_err(|e| e.to_string())?;
        let observed = run_spec(&spec, 100.0);
        ensure!(
            sut_records(&observed.trace, "ef_") == sut_records(&base.trace, "ef_"),
            "agent on {target} changed the model trace"
        );
    }
    let frame = build_frame("ef", None, &["count".into()], Some("count(solved) >= 5")).map_err(|e| e.to_string())?;
    let stopped = run_spec(&attach_observer(&gpt_spec(), "Proc", &frame).unwrap(), 1000.0);
    match stopped.status {
        RunStatus::Stopped { t: at, .. } => ensure!(at == t(52.5), "stopped at {at}"),
        other => return Err(format!("no stop: {other:?}")),
    }
    Ok("transparent on Gen, Proc, Trans; stop at 52.5".into())
}

// 9 ---------------------------------------------------------------------

fn livelock_guard() -> Outcome {
    for bound in [1, 2, 7, 1000] {
        let config = KernelConfig {
            livelock_guard: bound,
            ..KernelConfig::default()
        };
        let mut c = Coordinator::new(livelock_spec(), config).unwrap();
        c.initialize(SimTime::ZERO);
        let plan = RunPlan {
            t_end: t(10.0),
            max_cycles: None,
            realtime: None,
        };
        let i = c.run(&plan).err().ok_or("run completed")?;
        ensure!(
            i.error == Error::ZeroDelayLivelock { t: SimTime::ZERO, cycles: bound },
            "bound {bound}: {}",
            i.error
        );
        ensure!(i.partial.cycles == bound, "bound {bound}: ran {} cycles", i.partial.cycles);
    }
    Ok("bounds 1, 2, 7, 1000".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 dispatch conformance", dispatch_conformance, Duration::from_secs(1)),
        ("2 protocol-cycle correctness", protocol_cycle, Duration::from_secs(1)),
        ("3 closure under coupling", closure, Duration::from_secs(30)),
        ("4 transport transparency", transport_transparency, Duration::from_secs(60)),
        ("5 oracle equivalence", oracle_equivalence, Duration::from_secs(10)),
        ("6 real-time fidelity", realtime_fidelity, Duration::from_secs(5)),
        ("7 wire robustness", wire_robustness, Duration::from_secs(30)),
        ("8 experimental-frame transparency", frame_transparency, Duration::from_secs(5)),
        ("9 livelock guard", livelock_guard, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > budget => Err(format!("{detail}, but took {took:.2?} (budget {budget:?})")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}  [{took:.2?}]  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}  [{took:.2?}]  {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

//! Closure under coupling: a coupled model presented as an atomic one.

use std::any::Any;

use crate::atomic::{AtomicSpec, Behavior};
use crate::coupled::{validate_coupled, CoupledSpec};
use crate::error::{Error, Result};
use crate::kernel::{Coordinator, KernelConfig};
use crate::message::MessageBag;
use crate::time::SimTime;

/// Atomic behavior embedding a full coordinator over a coupled model.
///
/// The inner federation keeps its own clock starting at zero on `init`.
/// `time_advance` is the gap between the inner global time of next event and
/// that clock; each transition advances the inner protocol by one cycle.
#[derive(Debug, Clone)]
pub struct CoupledBehavior {
    inner: Coordinator,
    clock: SimTime,
    fault: Option<Error>,
}

impl CoupledBehavior {
    pub fn new(spec: &CoupledSpec) -> Result<Self> {
        let inner = Coordinator::new(
            spec.clone(),
            KernelConfig {
                record_trace: false,
                ..KernelConfig::default()
            },
        )?;
        Ok(CoupledBehavior {
            inner,
            clock: SimTime::ZERO,
            fault: None,
        })
    }

    pub fn inner(&self) -> &Coordinator {
        &self.inner
    }

    fn inner_tn(&self) -> SimTime {
        self.inner.next_tn()
    }

    fn advance(&mut self, t: SimTime, input: Option<&MessageBag>) {
        let result = input
            .map_or(Ok(()), |x| self.inner.inject(x))
            .and_then(|()| self.inner.cycle(t));
        if let Err(e) = result {
            self.fault = Some(e);
        }
        self.clock = t;
    }
}

impl Behavior for CoupledBehavior {
    fn init(&mut self) {
        self.inner.initialize(SimTime::ZERO);
        self.clock = SimTime::ZERO;
        self.fault = None;
    }

    fn delta_int(&mut self) {
        // Use the stored inner time rather than clock + ta so the inner
        // simulators see exactly the tN they computed.
        let t = self.inner_tn();
        self.advance(t, None);
    }

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag) {
        let mut t = self.clock + elapsed;
        let tn = self.inner_tn();
        if t >= tn {
            // Rounding pushed the arrival onto the next inner event; keep it
            // strictly before so no inner component fires without output.
            t = SimTime::new(next_below(tn.value()).max(self.clock.value())).unwrap_or(self.clock);
        }
        self.advance(t, Some(input));
    }

    fn delta_con(&mut self, _elapsed: SimTime, input: &MessageBag) {
        let t = self.inner_tn();
        self.advance(t, Some(input));
    }

    fn output(&self) -> MessageBag {
        let tn = self.inner_tn();
        if tn.is_infinite() {
            return MessageBag::new();
        }
        self.inner.peek_output(tn).unwrap_or_default()
    }

    fn time_advance(&self) -> SimTime {
        self.inner_tn() - self.clock
    }

    fn clone_box(&self) -> Box<dyn Behavior> {
        Box::new(self.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn take_fault(&mut self) -> Option<Error> {
        self.fault.take()
    }
}

fn next_below(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        0.0
    }
}

/// Wraps a coupled model so it can be simulated as a single atomic model.
pub fn digraph_to_atomic(spec: &CoupledSpec) -> Result<AtomicSpec> {
    validate_coupled(spec).map_err(Error::ValidationFailed)?;
    let behavior = CoupledBehavior::new(spec)?;
    Ok(AtomicSpec {
        name: spec.name.clone(),
        input_ports: spec.input_ports.clone(),
        output_ports: spec.output_ports.clone(),
        behavior: Box::new(behavior),
    })
}

//! Atomic models and the unified transition dispatcher.

use std::any::Any;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::message::MessageBag;
use crate::time::{next_tn, SimTime};

/// Behavior of an atomic model: an opaque state plus the DEVS functions.
///
/// Implementors own their state. `init` resets it; the transition functions
/// mutate it; `output` and `time_advance` only read it.
pub trait Behavior: Send + 'static {
    fn init(&mut self);

    fn delta_int(&mut self);

    fn delta_ext(&mut self, elapsed: SimTime, input: &MessageBag);

    /// Confluent transition. Defaults to the internal transition followed by
    /// the external one with zero elapsed time.
    fn delta_con(&mut self, _elapsed: SimTime, input: &MessageBag) {
        self.delta_int();
        self.delta_ext(SimTime::ZERO, input);
    }

    fn output(&self) -> MessageBag;

    fn time_advance(&self) -> SimTime;

    fn clone_box(&self) -> Box<dyn Behavior>;

    fn as_any(&self) -> &dyn Any;

    /// Error raised inside the last transition, if any. Transitions cannot
    /// fail directly; composite behaviors park their errors here.
    fn take_fault(&mut self) -> Option<Error> {
        None
    }
}

impl Clone for Box<dyn Behavior> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// An atomic model: declared ports plus a behavior.
#[derive(Clone)]
pub struct AtomicSpec {
    pub name: String,
    pub input_ports: BTreeSet<String>,
    pub output_ports: BTreeSet<String>,
    pub behavior: Box<dyn Behavior>,
}

impl AtomicSpec {
    pub fn new<I, O>(name: impl Into<String>, inputs: I, outputs: O, behavior: Box<dyn Behavior>) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
    {
        AtomicSpec {
            name: name.into(),
            input_ports: inputs.into_iter().map(Into::into).collect(),
            output_ports: outputs.into_iter().map(Into::into).collect(),
            behavior,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Downcasts the behavior to a concrete type.
    pub fn behavior_as<T: 'static>(&self) -> Option<&T> {
        self.behavior.as_any().downcast_ref::<T>()
    }
}

impl fmt::Debug for AtomicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AtomicSpec")
            .field("name", &self.name)
            .field("input_ports", &self.input_ports)
            .field("output_ports", &self.output_ports)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    NoOp,
    Internal,
    External,
    Confluent,
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionKind::NoOp => "noop",
            TransitionKind::Internal => "internal",
            TransitionKind::External => "external",
            TransitionKind::Confluent => "confluent",
        })
    }
}

/// Result of one dispatch call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispatched {
    pub kind: TransitionKind,
    /// `t − tL` of the pre-transition state.
    pub elapsed: SimTime,
    pub tl: SimTime,
    pub tn: SimTime,
}

/// Selects and runs the transition for one simulator at time `t`.
///
/// `pending` is the simulator's input slot; `None` means it was never
/// initialised. Any transition other than `NoOp` empties it and moves
/// `tl`/`tn` forward.
pub fn dispatch(
    model: &mut AtomicSpec,
    pending: &mut Option<MessageBag>,
    t: SimTime,
    tl: SimTime,
    tn: SimTime,
) -> Result<Dispatched> {
    let Some(input) = pending.as_ref() else {
        return Err(Error::MissingInput(model.name.clone()));
    };
    if t < tl || t > tn || !t.is_finite() {
        return Err(Error::TimeContractViolation {
            component: model.name.clone(),
            t,
            tl,
            tn,
        });
    }

    let elapsed = t - tl;
    let imminent = t == tn;
    let kind = match (input.is_empty(), imminent) {
        (true, false) => {
            return Ok(Dispatched {
                kind: TransitionKind::NoOp,
                elapsed,
                tl,
                tn,
            })
        }
        (false, true) => {
            model.behavior.delta_con(elapsed, input);
            TransitionKind::Confluent
        }
        (true, true) => {
            model.behavior.delta_int();
            TransitionKind::Internal
        }
        (false, false) => {
            model.behavior.delta_ext(elapsed, input);
            TransitionKind::External
        }
    };

    if let Some(fault) = model.behavior.take_fault() {
        return Err(fault);
    }
    *pending = Some(MessageBag::new());
    let ta = model.behavior.time_advance();
    Ok(Dispatched {
        kind,
        elapsed,
        tl: t,
        tn: next_tn(t, ta),
    })
}

/// Output of the model if it is imminent at `t`, otherwise the empty bag.
pub fn lambda_if_imminent(model: &AtomicSpec, t: SimTime, tn: SimTime) -> Result<MessageBag> {
    if t > tn || !t.is_finite() {
        return Err(Error::TimeContractViolation {
            component: model.name.clone(),
            t,
            tl: SimTime::ZERO,
            tn,
        });
    }
    if t == tn {
        Ok(model.behavior.output())
    } else {
        Ok(MessageBag::new())
    }
}

use thiserror::Error;

use crate::coupled::StructuralError;
use crate::time::SimTime;

/// Errors raised by the formalism and the simulation kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid simulation time {0}")]
    InvalidTime(f64),

    #[error("cannot parse time literal `{0}`")]
    BadTimeLiteral(String),

    #[error("received null input on `{0}`")]
    MissingInput(String),

    #[error("time contract violated on `{component}`: t={t}, tL={tl}, tN={tn}")]
    TimeContractViolation {
        component: String,
        t: SimTime,
        tl: SimTime,
        tn: SimTime,
    },

    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("port `{port}` is not declared on `{component}`")]
    UndeclaredPort { component: String, port: String },

    #[error("no peer endpoint for routing target `{target}` of `{component}`")]
    RoutingUnresolvable { component: String, target: String },

    #[error("content delivered to `{0}` after its transition in the same cycle")]
    BarrierViolation(String),

    #[error("zero-delay livelock: {cycles} cycles at t={t}")]
    ZeroDelayLivelock { t: SimTime, cycles: u64 },

    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),

    #[error("bad parameters for `{kind}`: {reason}")]
    BadParams { kind: String, reason: String },

    #[error("model failed validation: {}", join(.0))]
    ValidationFailed(Vec<StructuralError>),
}

fn join(errors: &[StructuralError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

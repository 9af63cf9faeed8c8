//! Parallel DEVS modeling and simulation.
//!
//! - [`atomic`], [`coupled`]: the formalism, including the transition
//!   dispatcher and coupling validation.
//! - [`closure`]: coupled models wrapped as atomic ones.
//! - [`kernel`]: simulators, the coordinator, run modes and traces.
//! - [`behaviors`]: the registry of behavior kinds documents may name.
//! - [`model`]: portable model documents and their partitioning.
//! - [`frame`]: experimental frames and test agents.

pub mod atomic;
pub mod behaviors;
pub mod closure;
pub mod coupled;
pub mod error;
pub mod frame;
pub mod kernel;
pub mod message;
pub mod model;
pub mod time;

pub use atomic::{dispatch, lambda_if_imminent, AtomicSpec, Behavior, Dispatched, TransitionKind};
pub use behaviors::{instantiate_behavior, BehaviorRegistry};
pub use closure::digraph_to_atomic;
pub use coupled::{route, validate_coupled, Component, CoupledSpec, Coupling, StructuralError, EXTERNAL};
pub use error::{Error, Result};
pub use kernel::{Coordinator, KernelConfig, RunMode, RunStatus, RunSummary, Simulator, TraceRecord};
pub use message::{ContentItem, MessageBag, Value};
pub use model::{parse_model, serialize_model, ModelDocument};
pub use time::SimTime;

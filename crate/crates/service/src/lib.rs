//! Simulation service: a TCP daemon hosting simulators for remote
//! coordinators, and the coordinator side that drives them.

pub mod client;
pub mod handler;
pub mod main_service;
pub mod registry;
pub mod remote;
pub mod server;
pub mod wire;

pub use client::{Client, ClientError};
pub use main_service::RunReport;
pub use registry::ServiceRegistry;
pub use remote::{RemoteCoordinator, RemoteError};
pub use server::{serve, serve_with, ServerHandle};
pub use wire::{parse_request, Request, Response, WireError};

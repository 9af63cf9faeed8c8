//! TCP daemon: one thread per connection, one session per connection.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::handler::{handle_request, Session};
use crate::registry::ServiceRegistry;
use crate::wire::{parse_request, Response};

type Connections = Arc<Mutex<BTreeMap<u64, TcpStream>>>;

/// A running daemon.
pub struct ServerHandle {
    addr: SocketAddr,
    registry: Arc<ServiceRegistry>,
    stopping: Arc<AtomicBool>,
    connections: Connections,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Address the listener is bound to.
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Address the daemon calls itself, used to recognise its own entries
    /// in an assignment.
    pub fn self_address(&self) -> &str {
        self.registry.self_address()
    }

    pub fn registry(&self) -> &Arc<ServiceRegistry> {
        &self.registry
    }

    /// Stops accepting, drops every open connection and every simulator.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    fn stop(&mut self) {
        if self.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        for stream in lock(&self.connections).values() {
            let _ = stream.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let n = self.registry.drain();
        log::info!("server {} stopped, dropped {n} simulators", self.addr);
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop();
        }
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Binds `bind` and starts serving. `advertise` overrides the address the
/// daemon believes it has (default: the bound address).
pub fn serve(bind: &str, advertise: Option<&str>) -> io::Result<ServerHandle> {
    serve_with(bind, advertise, None)
}

/// [`serve`] with an idle TTL for simulators.
pub fn serve_with(bind: &str, advertise: Option<&str>, idle_ttl: Option<Duration>) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let self_address = advertise.map(str::to_owned).unwrap_or_else(|| addr.to_string());
    let registry = Arc::new(ServiceRegistry::new(&self_address).with_idle_ttl(idle_ttl));
    let stopping = Arc::new(AtomicBool::new(false));
    let connections: Connections = Arc::default();

    let acceptor = {
        let (registry, stopping, connections) = (registry.clone(), stopping.clone(), connections.clone());
        thread::Builder::new()
            .name(format!("accept-{}", addr.port()))
            .spawn(move || accept_loop(listener, registry, stopping, connections))?
    };
    log::info!("serving on {addr} as {self_address}");
    Ok(ServerHandle {
        addr,
        registry,
        stopping,
        connections,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(listener: TcpListener, registry: Arc<ServiceRegistry>, stopping: Arc<AtomicBool>, connections: Connections) {
    let next_id = AtomicU64::new(0);
    for stream in listener.incoming() {
        if stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let id = next_id.fetch_add(1, Ordering::Relaxed);
        if let Ok(clone) = stream.try_clone() {
            lock(&connections).insert(id, clone);
        }
        let (registry, connections) = (registry.clone(), connections.clone());
        let spawned = thread::Builder::new().name(format!("conn-{id}")).spawn(move || {
            if let Err(e) = serve_connection(stream, &registry) {
                log::debug!("connection {id} ended: {e}");
            }
            lock(&connections).remove(&id);
        });
        if let Err(e) = spawned {
            log::error!("cannot spawn connection thread: {e}");
        }
    }
}

/// Serves one connection until it closes. Simulators the session created
/// and did not exit are removed when it ends.
pub fn serve_connection(stream: TcpStream, registry: &ServiceRegistry) -> io::Result<()> {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "unknown".into());
    stream.set_nodelay(true).ok();
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut session = Session::new(&peer);
    let mut buf = Vec::new();

    let result = loop {
        buf.clear();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break Ok(()),
            Ok(_) => {}
            Err(e) => break Err(e),
        }
        let response = match std::str::from_utf8(&buf) {
            Err(_) => Response::err(None, "BadRequest", "request is not valid UTF-8"),
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => match parse_request(line.trim()) {
                Err(resp) => resp,
                Ok(req) => {
                    let seq = req.seq;
                    catch_unwind(AssertUnwindSafe(|| handle_request(registry, &mut session, req)))
                        .unwrap_or_else(|_| Response::err(Some(seq), "Internal", "handler panicked"))
                }
            },
        };
        if let Err(e) = writer.write_all(response.to_line().as_bytes()) {
            break Err(e);
        }
    };
    registry.remove_all(&session.created);
    result
}

//! TCP front end for a [`Gateway`].
//!
//! One ticker thread owns the clock, one reader and one writer thread per
//! connection. All of them meet at a single mutex around the gateway, so
//! commands from different clients are applied one at a time.

use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::hmi::codec::{read_message, write_message, CodecError, Message};
use crate::hmi::gateway::Gateway;
use crate::hmi::snapshot::Delta;

/// Outgoing messages queued per connection before it counts as a slow consumer.
const OUTBOX: usize = 1024;
const TICK: Duration = Duration::from_millis(50);

struct Subscriber {
    id: u64,
    tx: SyncSender<Message>,
    stream: TcpStream,
}

struct Hub {
    gateway: Gateway,
    subscribers: Vec<Subscriber>,
    connections: Vec<(u64, TcpStream)>,
}

impl Hub {
    fn publish(&mut self, delta: Option<Delta>) {
        let Some(delta) = delta else { return };
        self.subscribers.retain(|s| match s.tx.try_send(Message::Delta { delta: Box::new(delta.clone()) }) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                eprintln!("gateway: dropping slow subscriber {}", s.id);
                let _ = s.stream.shutdown(Shutdown::Both);
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }
}

type Shared = Arc<Mutex<Hub>>;

fn lock(hub: &Shared) -> MutexGuard<'_, Hub> {
    hub.lock().unwrap_or_else(|p| p.into_inner())
}

pub struct Server {
    addr: SocketAddr,
    hub: Shared,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn start(listener: TcpListener, gateway: Gateway) -> io::Result<Server> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let hub: Shared = Arc::new(Mutex::new(Hub { gateway, subscribers: Vec::new(), connections: Vec::new() }));
        let stop = Arc::new(AtomicBool::new(false));

        let ticker = {
            let (hub, stop) = (hub.clone(), stop.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    thread::sleep(TICK);
                    let mut h = lock(&hub);
                    let delta = h.gateway.tick(TICK);
                    h.publish(delta);
                }
            })
        };
        let acceptor = {
            let (hub, stop) = (hub.clone(), stop.clone());
            thread::spawn(move || accept_loop(listener, hub, stop))
        };
        Ok(Server { addr, hub, stop, threads: vec![ticker, acceptor] })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs `f` against the gateway under the same lock commands use.
    pub fn with_gateway<T>(&self, f: impl FnOnce(&Gateway) -> T) -> T {
        f(&lock(&self.hub).gateway)
    }

    /// Blocks until the server is stopped from another thread.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn shutdown(&self) {
        self.stop.store(true, Ordering::Relaxed);
        for (_, s) in lock(&self.hub).connections.drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, hub: Shared, stop: Arc<AtomicBool>) {
    let ids = AtomicU64::new(1);
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = ids.fetch_add(1, Ordering::Relaxed);
                if let Err(e) = spawn_connection(id, stream, hub.clone()) {
                    eprintln!("gateway: connection {id} failed to start: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                eprintln!("gateway: accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn spawn_connection(id: u64, stream: TcpStream, hub: Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let (tx, rx) = sync_channel::<Message>(OUTBOX);
    let mut out = stream.try_clone()?;
    lock(&hub).connections.push((id, stream.try_clone()?));
    thread::spawn(move || {
        for m in rx {
            if let Err(e) = write_message(&mut out, &m) {
                eprintln!("gateway: write to connection {id} failed: {e}");
                let _ = out.shutdown(Shutdown::Both);
                break;
            }
        }
    });
    thread::spawn(move || {
        serve_connection(id, stream.try_clone().expect("stream clone"), &hub, tx);
        let mut h = lock(&hub);
        h.subscribers.retain(|s| s.id != id);
        h.connections.retain(|(c, _)| *c != id);
        let _ = stream.shutdown(Shutdown::Read);
    });
    Ok(())
}

fn serve_connection(id: u64, mut stream: TcpStream, hub: &Shared, tx: SyncSender<Message>) {
    loop {
        let message = match read_message(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => return,
            Err(CodecError::Io(_)) => return,
            Err(e) => {
                eprintln!("gateway: protocol violation on connection {id}: {e}");
                let _ = tx.send(Message::Error { message: e.to_string() });
                return;
            }
        };
        let sent = match message {
            Message::Hello { .. } => tx.send(Message::Hello { peer: "amfs-gateway".into() }).is_ok(),
            Message::SnapshotRequest => {
                let snapshot = Box::new(lock(hub).gateway.snapshot().clone());
                tx.send(Message::Snapshot { snapshot }).is_ok()
            }
            Message::Subscribe => {
                // Registering under the lock keeps the stream gap-free from this snapshot on.
                let mut h = lock(hub);
                let snapshot = Box::new(h.gateway.snapshot().clone());
                let stream = match stream.try_clone() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                h.subscribers.retain(|s| s.id != id);
                h.subscribers.push(Subscriber { id, tx: tx.clone(), stream });
                tx.try_send(Message::Snapshot { snapshot }).is_ok()
            }
            Message::Command { command_id, command } => {
                let mut h = lock(hub);
                let (ack, delta) = h.gateway.apply(&command_id, &command);
                let sent = tx.try_send(Message::Ack { ack }).is_ok();
                h.publish(delta);
                sent
            }
            other => {
                eprintln!("gateway: unexpected `{}` from connection {id}", other.kind());
                let _ = tx.send(Message::Error { message: format!("clients may not send `{}`", other.kind()) });
                return;
            }
        };
        if !sent {
            return;
        }
    }
}

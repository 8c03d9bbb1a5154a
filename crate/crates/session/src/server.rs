//! WebSocket server: one thread per connection plus a stepper thread that
//! advances playback at the clip frame rate.
//!
//! The first client to connect while no author is present becomes the
//! author. Later clients are read-only viewers and receive the same frame
//! stream. Each client owns an outbound queue; when a slow client falls
//! behind, its oldest pending point clouds are dropped. Text messages,
//! snapshots included, are never dropped.

use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

use volfx_core::frame::FPS;

use crate::host::SessionHost;
use crate::protocol::{ErrorCode, Outgoing, Role, ServerMessage};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";
/// Pending point clouds a client may hold before the oldest is dropped.
pub const MAX_PENDING_CLOUDS: usize = 2;

const POLL: Duration = Duration::from_millis(2);

struct Client {
    id: u64,
    role: Role,
    queue: Mutex<VecDeque<Outgoing>>,
    dropped: AtomicU64,
}

impl Client {
    fn push(&self, msg: Outgoing) {
        let mut q = self.queue.lock().unwrap();
        if msg.is_cloud() {
            let pending = q.iter().filter(|m| m.is_cloud()).count();
            if pending >= MAX_PENDING_CLOUDS {
                if let Some(i) = q.iter().position(Outgoing::is_cloud) {
                    q.remove(i);
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        q.push_back(msg);
    }

    fn drain(&self) -> Vec<Outgoing> {
        self.queue.lock().unwrap().drain(..).collect()
    }
}

struct Hub {
    host: Mutex<SessionHost>,
    clients: Mutex<Vec<Arc<Client>>>,
    next_id: AtomicU64,
    shutdown: AtomicBool,
}

impl Hub {
    fn broadcast(&self, msgs: Vec<Outgoing>) {
        let clients = self.clients.lock().unwrap();
        for m in msgs {
            for c in clients.iter() {
                c.push(m.clone());
            }
        }
    }

    fn register(&self) -> Arc<Client> {
        let mut clients = self.clients.lock().unwrap();
        let role = if clients.iter().any(|c| c.role == Role::Author) { Role::Viewer } else { Role::Author };
        let c = Arc::new(Client {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            role,
            queue: Mutex::new(VecDeque::new()),
            dropped: AtomicU64::new(0),
        });
        clients.push(Arc::clone(&c));
        c
    }

    fn unregister(&self, id: u64) {
        self.clients.lock().unwrap().retain(|c| c.id != id);
    }
}

pub struct Server {
    listener: TcpListener,
    hub: Arc<Hub>,
}

/// A server running on background threads.
pub struct ServerHandle {
    addr: SocketAddr,
    hub: Arc<Hub>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        self.hub.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads {
            let _ = t.join();
        }
    }
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, host: SessionHost) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let hub = Arc::new(Hub {
            host: Mutex::new(host),
            clients: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(0),
            shutdown: AtomicBool::new(false),
        });
        Ok(Self { listener, hub })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serve until the process exits.
    pub fn run(self) -> io::Result<()> {
        let handle = self.spawn()?;
        for t in handle.threads {
            let _ = t.join();
        }
        Ok(())
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        info!("listening on ws://{addr}");
        let stepper = {
            let hub = Arc::clone(&self.hub);
            thread::Builder::new().name("stepper".into()).spawn(move || step_loop(&hub))?
        };
        let acceptor = {
            let hub = Arc::clone(&self.hub);
            let listener = self.listener;
            thread::Builder::new().name("accept".into()).spawn(move || accept_loop(&listener, &hub))?
        };
        Ok(ServerHandle { addr, hub: self.hub, threads: vec![stepper, acceptor] })
    }
}

fn step_loop(hub: &Hub) {
    let period = Duration::from_secs_f64(1.0 / f64::from(FPS));
    let mut next = Instant::now();
    while !hub.shutdown.load(Ordering::SeqCst) {
        {
            let mut host = hub.host.lock().unwrap();
            let msgs = host.tick();
            if !msgs.is_empty() {
                hub.broadcast(msgs);
            }
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
}

fn accept_loop(listener: &TcpListener, hub: &Arc<Hub>) {
    let mut conns = Vec::new();
    while !hub.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                // Roles and greetings are assigned in accept order, before the
                // handshake, while holding the host lock so no tick can race.
                let client = {
                    let host = hub.host.lock().unwrap();
                    let c = hub.register();
                    c.push(Outgoing::msg(&host.session_info(c.role)));
                    for m in host.frame_messages() {
                        c.push(m);
                    }
                    c
                };
                let hub = Arc::clone(hub);
                conns.push(thread::spawn(move || {
                    info!("client {} ({peer}) connected as {:?}", client.id, client.role);
                    if let Err(e) = serve_connection(stream, &hub, &client) {
                        debug!("{peer}: {e}");
                    }
                    hub.unregister(client.id);
                    let dropped = client.dropped.load(Ordering::Relaxed);
                    info!("client {} disconnected ({dropped} clouds dropped)", client.id);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => warn!("accept: {e}"),
        }
    }
    for c in conns {
        let _ = c.join();
    }
}

fn serve_connection(stream: TcpStream, hub: &Hub, client: &Client) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    connection_loop(&mut ws, hub, client)
}

fn connection_loop(ws: &mut WebSocket<TcpStream>, hub: &Hub, client: &Client) -> Result<(), tungstenite::Error> {
    loop {
        if hub.shutdown.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        let out = client.drain();
        let wrote = !out.is_empty();
        for m in out {
            ws.write(match m {
                Outgoing::Text(t) => Message::Text(t),
                Outgoing::Binary(b) => Message::Binary(b),
            })?;
        }
        if wrote {
            ws.flush()?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let mut host = hub.host.lock().unwrap();
                let r = host.handle_text(&text, client.role);
                for m in r.replies {
                    client.push(m);
                }
                hub.broadcast(r.broadcast);
            }
            Ok(Message::Binary(_)) => client.push(Outgoing::msg(&ServerMessage::error(
                None,
                ErrorCode::Parse,
                "commands are JSON text frames",
            ))),
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

//! TCP front end for a [`Session`].
//!
//! The tick loop runs on its own thread and owns the session. Each client
//! connection gets a reader thread that parses frames and a writer thread
//! that drains an outgoing queue; both talk to the tick loop only through
//! channels. The first client to connect is the pilot; later ones observe.
//! The session stays paused until the pilot's first input.

use crate::config::RunConfig;
use crate::protocol::{
    decode_client, encode, read_frame, write_frame, ClientMessage, EventMessage, Frame, Role, ServerMessage,
    ServiceEvent, MAX_MESSAGE_BYTES,
};
use crate::record::Recorder;
use crate::session::{InputFrame, Session};
use std::fs::File;
use std::io::{self, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

enum Control {
    Connected { id: u64, out: Sender<Arc<Vec<u8>>> },
    Input { id: u64, frame: InputFrame },
    Malformed { id: u64, reason: String },
    Disconnected { id: u64 },
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads {
            let _ = t.join();
        }
    }

    /// Blocks until the tick loop exits (session complete or shutdown).
    pub fn join(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Writes the session log here.
    pub record: Option<PathBuf>,
    /// Keep serving frames after the session completes.
    pub linger: bool,
}

/// Binds `listen` and starts the service threads.
pub fn serve(cfg: RunConfig, listen: impl ToSocketAddrs, opts: ServeOptions) -> io::Result<ServerHandle> {
    let session = Session::new(cfg.clone()).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let listener = TcpListener::bind(listen)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (ctl_tx, ctl_rx) = mpsc::channel();

    let recorder = match &opts.record {
        Some(path) => Some(Recorder::new(BufWriter::new(File::create(path)?), &cfg)?),
        None => None,
    };

    let accept_stop = stop.clone();
    let acceptor = thread::Builder::new()
        .name("embflight-accept".into())
        .spawn(move || accept_loop(listener, ctl_tx, accept_stop))?;
    let tick_stop = stop.clone();
    let ticker = thread::Builder::new()
        .name("embflight-tick".into())
        .spawn(move || tick_loop(session, ctl_rx, recorder, tick_stop, opts.linger))?;
    log::info!("serving on {addr}");
    Ok(ServerHandle {
        addr,
        stop,
        threads: vec![ticker, acceptor],
    })
}

fn accept_loop(listener: TcpListener, ctl: Sender<Control>, stop: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                log::info!("client {id} connected from {peer}");
                if let Err(e) = spawn_client(id, stream, ctl.clone()) {
                    log::warn!("client {id}: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

fn spawn_client(id: u64, stream: TcpStream, ctl: Sender<Control>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let (out_tx, out_rx) = mpsc::channel::<Arc<Vec<u8>>>();
    thread::spawn(move || {
        while let Ok(bytes) = out_rx.recv() {
            if write_frame(&mut writer, &bytes).is_err() {
                break;
            }
        }
        let _ = writer.shutdown(std::net::Shutdown::Both);
    });
    if ctl.send(Control::Connected { id, out: out_tx }).is_err() {
        return Ok(());
    }
    thread::spawn(move || {
        loop {
            let msg = match read_frame(&mut reader) {
                Ok(Some(Frame::Message(bytes))) => match decode_client(&bytes) {
                    Ok(ClientMessage::Input(frame)) => Control::Input { id, frame },
                    Err(reason) => Control::Malformed { id, reason },
                },
                Ok(Some(Frame::Oversized(n))) => Control::Malformed {
                    id,
                    reason: format!("message of {n} bytes exceeds {MAX_MESSAGE_BYTES}"),
                },
                Ok(None) | Err(_) => break,
            };
            if ctl.send(msg).is_err() {
                return;
            }
        }
        let _ = ctl.send(Control::Disconnected { id });
    });
    Ok(())
}

struct Clients {
    outs: Vec<(u64, Sender<Arc<Vec<u8>>>)>,
    pilot: Option<u64>,
}

impl Clients {
    fn send_to(&mut self, id: u64, msg: &ServerMessage) {
        let bytes = Arc::new(encode(msg));
        self.outs
            .retain(|(cid, tx)| *cid != id || tx.send(bytes.clone()).is_ok());
    }

    fn broadcast(&mut self, msg: &ServerMessage) {
        let bytes = Arc::new(encode(msg));
        self.outs.retain(|(_, tx)| tx.send(bytes.clone()).is_ok());
    }
}

fn tick_loop(
    mut session: Session,
    ctl: Receiver<Control>,
    mut recorder: Option<Recorder<BufWriter<File>>>,
    stop: Arc<AtomicBool>,
    linger: bool,
) {
    let period = Duration::from_secs_f64(session.config().dt());
    let mut clients = Clients {
        outs: Vec::new(),
        pilot: None,
    };
    // Nothing moves until a pilot connects and sends an unpaused input.
    session.set_paused(true);
    let mut deadline = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        while let Ok(msg) = ctl.try_recv() {
            match msg {
                Control::Connected { id, out } => {
                    let role = if clients.pilot.is_none() {
                        clients.pilot = Some(id);
                        Role::Pilot
                    } else {
                        Role::Observer
                    };
                    clients.outs.push((id, out));
                    clients.send_to(
                        id,
                        &ServerMessage::Event(EventMessage::Service(ServiceEvent::Connected { client_id: id, role })),
                    );
                }
                Control::Input { id, frame } => {
                    if clients.pilot == Some(id) {
                        session.submit_input(frame);
                    }
                }
                Control::Malformed { id, reason } => clients.send_to(id, &ServerMessage::Error { reason }),
                Control::Disconnected { id } => {
                    clients.outs.retain(|(cid, _)| *cid != id);
                    if clients.pilot == Some(id) {
                        clients.pilot = None;
                        session.set_paused(true);
                        clients.broadcast(&ServerMessage::Event(EventMessage::Service(
                            ServiceEvent::PilotDisconnected { client_id: id },
                        )));
                    }
                }
            }
        }

        let was_complete = session.is_complete();
        let out = session.tick();
        if let Some(rec) = recorder.as_mut() {
            if let Err(e) = rec.record(&out) {
                log::error!("recording failed: {e}");
                recorder = None;
            }
        }
        for frame in &out.delivered {
            clients.broadcast(&ServerMessage::State(frame.clone()));
        }
        for ev in &out.events {
            clients.broadcast(&ServerMessage::Event(EventMessage::Session(ev.clone())));
        }
        if session.is_complete() && !was_complete && !linger {
            break;
        }

        deadline += period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else if now - deadline > period * 10 {
            // Fell far behind; do not try to catch up in a burst.
            deadline = now;
        }
    }
    if let Some(mut rec) = recorder {
        let _ = rec.flush();
    }
    stop.store(true, Ordering::SeqCst);
}

//! Websocket front end. One stepper thread owns the session and paces it
//! against the wall clock; every client connection runs on its own thread
//! and talks to the stepper only through channels of owned values.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::{
    decode_command, encode_message, Command, ErrorCode, ErrorReply, ServerMessage,
};
use super::session::{Session, SessionRecord};
use crate::error::{Error, Result};
use crate::io::RunConfig;

/// Port used when neither a flag nor `TELECOOP_PORT` gives one.
pub const DEFAULT_PORT: u16 = 8765;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    /// Snapshots per wall-clock second.
    pub snapshot_rate: f64,
    /// Commands older than this freeze the master input in place.
    pub stale_after: Duration,
    /// Simulated seconds per wall second.
    pub speed: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            snapshot_rate: 60.0,
            stale_after: Duration::from_secs(2),
            speed: 1.0,
        }
    }
}

enum Inbound {
    Connect {
        client: u64,
        outbox: Sender<Outbound>,
    },
    Command {
        client: u64,
        command: Command,
    },
    Disconnect {
        client: u64,
    },
}

enum Outbound {
    Text(String),
    Close,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stepper: JoinHandle<Result<SessionRecord>>,
    acceptor: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_finished(&self) -> bool {
        self.stepper.is_finished()
    }

    /// Stop serving and hand back the session for replay.
    pub fn shutdown(self) -> Result<SessionRecord> {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.acceptor.join();
        self.stepper
            .join()
            .map_err(|_| Error::Protocol("stepper thread panicked".into()))?
    }
}

/// Start serving `config`, whose scenario must be `interactive`.
pub fn serve(config: &RunConfig, opts: ServeOptions) -> Result<ServerHandle> {
    if !(opts.snapshot_rate > 0.0) || !(opts.speed > 0.0) {
        return Err(Error::Validation(
            "snapshot rate and speed must be > 0".into(),
        ));
    }
    let session = Session::new(config)?;
    let listener = TcpListener::bind(opts.addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let stepper = {
        let stop = stop.clone();
        thread::Builder::new()
            .name("bridge-stepper".into())
            .spawn(move || run_stepper(session, rx, stop, opts))?
    };
    let acceptor = {
        let stop = stop.clone();
        thread::Builder::new()
            .name("bridge-accept".into())
            .spawn(move || run_acceptor(listener, tx, stop))?
    };
    log::info!("bridge listening on ws://{addr}");
    Ok(ServerHandle {
        addr,
        stop,
        stepper,
        acceptor,
    })
}

fn run_acceptor(listener: TcpListener, inbox: Sender<Inbound>, stop: Arc<AtomicBool>) {
    let mut next_id = 1u64;
    let mut clients = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (id, inbox, stop) = (next_id, inbox.clone(), stop.clone());
                next_id += 1;
                log::debug!("client {id} connected from {peer}");
                let spawned = thread::Builder::new()
                    .name(format!("bridge-client-{id}"))
                    .spawn(move || run_client(id, stream, inbox, stop));
                match spawned {
                    Ok(h) => clients.push(h),
                    Err(e) => log::warn!("cannot start client thread: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
        clients.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for h in clients {
        let _ = h.join();
    }
}

fn send_text(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> bool {
    ws.send(Message::text(encode_message(msg))).is_ok()
}

fn run_client(id: u64, stream: TcpStream, inbox: Sender<Inbound>, stop: Arc<AtomicBool>) {
    if stream.set_nonblocking(false).is_err()
        || stream
            .set_read_timeout(Some(Duration::from_secs(2)))
            .is_err()
    {
        return;
    }
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("client {id}: handshake failed: {e}");
            return;
        }
    };
    if ws
        .get_mut()
        .set_read_timeout(Some(Duration::from_millis(2)))
        .is_err()
    {
        return;
    }
    let (out_tx, out_rx): (Sender<Outbound>, Receiver<Outbound>) = mpsc::channel();
    if inbox
        .send(Inbound::Connect {
            client: id,
            outbox: out_tx,
        })
        .is_err()
    {
        return;
    }
    'session: while !stop.load(Ordering::SeqCst) {
        loop {
            match out_rx.try_recv() {
                Ok(Outbound::Text(text)) => {
                    if ws.send(Message::text(text)).is_err() {
                        break 'session;
                    }
                }
                Ok(Outbound::Close) | Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'session;
                }
                Err(TryRecvError::Empty) => break,
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match decode_command(text.as_str()) {
                Ok(command) => {
                    if inbox
                        .send(Inbound::Command {
                            client: id,
                            command,
                        })
                        .is_err()
                    {
                        break;
                    }
                }
                Err(reply) => {
                    if !send_text(&mut ws, &ServerMessage::Error(reply)) {
                        break;
                    }
                }
            },
            Ok(Message::Binary(_)) => {
                let reply = ErrorReply::new(
                    ErrorCode::ProtocolViolation,
                    "binary frames are not part of the protocol",
                );
                send_text(&mut ws, &ServerMessage::Error(reply));
                let _ = ws.close(None);
                let _ = ws.flush();
                break;
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
    let _ = inbox.send(Inbound::Disconnect { client: id });
}

fn run_stepper(
    mut session: Session,
    inbox: Receiver<Inbound>,
    stop: Arc<AtomicBool>,
    opts: ServeOptions,
) -> Result<SessionRecord> {
    let dt = session.dt();
    let period = Duration::from_secs_f64(1.0 / opts.snapshot_rate);
    // bounds the work between inbox checks when the host falls behind
    let max_burst = ((0.05 * opts.speed / dt).ceil() as u64).max(1);
    let start = Instant::now();
    let mut last_snapshot: Option<Instant> = None;
    let mut last_command = Instant::now();
    let mut outboxes: Vec<(u64, Sender<Outbound>)> = Vec::new();
    let mut failure = None;

    while !stop.load(Ordering::SeqCst) {
        loop {
            match inbox.try_recv() {
                Ok(Inbound::Connect { client, outbox }) => {
                    if session.attach(client) {
                        let welcome = ServerMessage::Welcome {
                            client_id: client,
                            dt,
                            snapshot_rate: opts.snapshot_rate,
                        };
                        let _ = outbox.send(Outbound::Text(encode_message(&welcome)));
                        last_command = Instant::now();
                        outboxes.push((client, outbox));
                    } else {
                        let reply = ErrorReply::new(
                            ErrorCode::SessionBusy,
                            "another client controls this session",
                        );
                        let _ = outbox
                            .send(Outbound::Text(encode_message(&ServerMessage::Error(reply))));
                        let _ = outbox.send(Outbound::Close);
                    }
                }
                Ok(Inbound::Command { client, command }) => {
                    if session.controller() != Some(client) {
                        continue;
                    }
                    last_command = Instant::now();
                    if let Err(e) = session.submit(command.input) {
                        let reply = ErrorReply::new(ErrorCode::Rejected, e.to_string());
                        send_to(&outboxes, client, &ServerMessage::Error(reply));
                    }
                }
                Ok(Inbound::Disconnect { client }) => {
                    outboxes.retain(|(c, _)| *c != client);
                    session.detach(client)?;
                }
                Err(_) => break,
            }
        }

        let due = (start.elapsed().as_secs_f64() * opts.speed / dt) as u64;
        let mut burst = 0;
        while session.steps() < due && burst < max_burst {
            if let Err(e) = session.step() {
                failure = Some(e);
                break;
            }
            burst += 1;
        }
        if let Some(e) = failure.take() {
            let reply = ErrorReply::new(ErrorCode::Diverged, e.to_string());
            for (c, _) in &outboxes {
                send_to(&outboxes, *c, &ServerMessage::Error(reply.clone()));
            }
            close_all(&outboxes);
            return Err(e);
        }

        if last_snapshot.is_none_or(|t| t.elapsed() >= period) {
            last_snapshot = Some(Instant::now());
            if let (Some(c), false) = (session.controller(), outboxes.is_empty()) {
                let stale = last_command.elapsed() > opts.stale_after;
                send_to(
                    &outboxes,
                    c,
                    &ServerMessage::Snapshot(session.snapshot(stale)),
                );
            }
        }
        thread::sleep(Duration::from_micros(500));
    }
    close_all(&outboxes);
    Ok(session.into_record())
}

fn send_to(outboxes: &[(u64, Sender<Outbound>)], client: u64, msg: &ServerMessage) {
    if let Some((_, tx)) = outboxes.iter().find(|(c, _)| *c == client) {
        let _ = tx.send(Outbound::Text(encode_message(msg)));
    }
}

fn close_all(outboxes: &[(u64, Sender<Outbound>)]) {
    for (_, tx) in outboxes {
        let _ = tx.send(Outbound::Close);
    }
}

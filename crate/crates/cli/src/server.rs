//! WebSocket bridge between [`run_physics`] and browser clients.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use ific::config::RunConfig;
use tungstenite::{Message, WebSocket};

use crate::live::{run_physics, Envelope, LiveSession};
use crate::protocol::{parse_client_message, ServerMessage};

const POLL: Duration = Duration::from_millis(5);
const CLIENT_QUEUE: usize = 16;

/// A running bridge. Dropping it without [`Server::shutdown`] leaves the
/// threads running until the process exits.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    physics: JoinHandle<LiveSession>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` (port 0 picks a free one) and starts the physics loop.
    pub fn start(config: &RunConfig, addr: &str) -> anyhow::Result<Self> {
        let session = LiveSession::new(config)?;
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));

        let (command_tx, command_rx) = bounded::<Envelope>(256);
        let (state_tx, state_rx) = bounded::<ServerMessage>(4);
        let (register_tx, register_rx) = bounded::<Sender<ServerMessage>>(16);

        let telemetry = config.telemetry;
        let physics = {
            let stop = stop.clone();
            thread::Builder::new()
                .name("physics".into())
                .spawn(move || run_physics(session, command_rx, state_tx, telemetry.rate, telemetry.realtime_factor, stop))?
        };
        let broadcaster = {
            let stop = stop.clone();
            thread::Builder::new()
                .name("broadcast".into())
                .spawn(move || broadcast(state_rx, register_rx, stop))?
        };
        let acceptor = {
            let stop = stop.clone();
            thread::Builder::new()
                .name("accept".into())
                .spawn(move || accept(listener, command_tx, register_tx, stop))?
        };
        log::info!("serving on ws://{addr}");
        Ok(Self {
            addr,
            stop,
            physics,
            threads: vec![broadcaster, acceptor],
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops all threads and returns the session as it was left.
    pub fn shutdown(self) -> LiveSession {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads {
            let _ = t.join();
        }
        self.physics.join().expect("physics thread panicked")
    }

    /// Blocks until the physics thread ends.
    pub fn wait(self) -> LiveSession {
        self.physics.join().expect("physics thread panicked")
    }
}

fn broadcast(states: Receiver<ServerMessage>, register: Receiver<Sender<ServerMessage>>, stop: Arc<AtomicBool>) {
    let mut clients: Vec<Sender<ServerMessage>> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        clients.extend(register.try_iter());
        let Ok(msg) = states.recv_timeout(POLL * 10) else {
            continue;
        };
        clients.retain(|c| !matches!(c.try_send(msg.clone()), Err(TrySendError::Disconnected(_))));
    }
}

fn accept(
    listener: TcpListener,
    commands: Sender<Envelope>,
    register: Sender<Sender<ServerMessage>>,
    stop: Arc<AtomicBool>,
) {
    let mut clients = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client {peer} connected");
                let (tx, rx) = bounded(CLIENT_QUEUE);
                if register.send(tx.clone()).is_err() {
                    break;
                }
                let commands = commands.clone();
                let stop = stop.clone();
                clients.push(thread::spawn(move || {
                    if let Err(e) = client(stream, commands, tx, rx, stop) {
                        log::info!("client {peer}: {e}");
                    }
                    log::info!("client {peer} disconnected");
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => log::warn!("accept failed: {e}"),
        }
        clients.retain(|c: &JoinHandle<()>| !c.is_finished());
    }
    for c in clients {
        let _ = c.join();
    }
}

fn client(
    stream: TcpStream,
    commands: Sender<Envelope>,
    reply: Sender<ServerMessage>,
    outgoing: Receiver<ServerMessage>,
    stop: Arc<AtomicBool>,
) -> anyhow::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake failed: {e}"))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;

    while !stop.load(Ordering::Relaxed) {
        for msg in outgoing.try_iter() {
            ws.send(Message::text(msg.to_json()))?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => match parse_client_message(text.as_str()) {
                Ok(message) => {
                    let env = Envelope {
                        message,
                        reply: Some(reply.clone()),
                    };
                    if commands.send(env).is_err() {
                        break;
                    }
                }
                Err(message) => ws.send(Message::text(ServerMessage::error(message).to_json()))?,
            },
            Ok(Message::Binary(_)) => {
                ws.send(Message::text(ServerMessage::error("binary frames are not supported").to_json()))?;
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        }
    }
    close(&mut ws);
    Ok(())
}

fn close(ws: &mut WebSocket<TcpStream>) {
    let _ = ws.close(None);
    let _ = ws.flush();
}

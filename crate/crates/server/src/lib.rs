//! Serves one program to one debugger client over two WebSocket endpoints:
//! `/control` carries JSON control messages, `/trace` carries the binary
//! trace stream. The two are written independently, so a trace record may
//! reference a symbol whose Symbols message has not arrived yet.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use polydbg_core::debug::TraceSink;
use polydbg_core::minilang::{ParseError, SourceUnit};
use polydbg_core::runtime::{RunConfig, RunOutcome};
use polydbg_core::Session;
use polydbg_protocol::{ControlMessage, MetaDataCatalog};
use thiserror::Error;
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::http::{HeaderValue, StatusCode};
use tungstenite::{Message, WebSocket};

pub const DEFAULT_PORT: u16 = 7777;
pub const CONTROL_PATH: &str = "/control";
pub const TRACE_PATH: &str = "/trace";
pub const CONTROL_PROTOCOL: &str = "kompos-control";
pub const TRACE_PROTOCOL: &str = "kompos-trace";

const POLL: Duration = Duration::from_millis(20);
/// How long to wait for the peer to answer a close frame.
const CLOSE_GRACE: Duration = Duration::from_millis(250);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

type Socket = WebSocket<TcpStream>;

enum TraceCmd {
    Bytes(Vec<u8>),
    Attach(Box<Socket>),
    /// Send everything queued, close the socket, then acknowledge.
    Finish(Sender<()>),
}

struct ChannelSink(Sender<TraceCmd>);

impl TraceSink for ChannelSink {
    fn write(&mut self, bytes: &[u8]) {
        let _ = self.0.send(TraceCmd::Bytes(bytes.to_vec()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Initialized,
    Launched,
}

impl State {
    fn name(self) -> &'static str {
        match self {
            State::Initialized => "initialized",
            State::Launched => "launched",
        }
    }
}

enum ClientEnd {
    Exited(RunOutcome),
    Disconnected,
}

pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Waits for a client, runs the program under its control and returns
    /// once the program has exited. A client that goes away after launch
    /// leaves the program running headless; one that leaves before launch
    /// frees the slot for the next client.
    pub fn serve(
        self,
        source: SourceUnit,
        catalog: Arc<MetaDataCatalog>,
        config: RunConfig,
    ) -> Result<RunOutcome, ServerError> {
        let (trace_tx, trace_rx) = mpsc::channel();
        let session = Session::new(source, catalog, Box::new(ChannelSink(trace_tx.clone())))?;
        let trace_busy = Arc::new(AtomicBool::new(false));
        let trace_writer = {
            let busy = trace_busy.clone();
            thread::Builder::new().name("trace-writer".into()).spawn(move || trace_writer(trace_rx, busy))?
        };

        let control_busy = Arc::new(AtomicBool::new(false));
        let stop = Arc::new(AtomicBool::new(false));
        let (client_tx, client_rx) = mpsc::channel();
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let (control_busy, trace_busy, stop) = (control_busy.clone(), trace_busy.clone(), stop.clone());
            let trace_tx = trace_tx.clone();
            thread::Builder::new().name("acceptor".into()).spawn(move || {
                accept_loop(self.listener, client_tx, trace_tx, control_busy, trace_busy, stop)
            })?
        };

        let mut launched: Option<JoinHandle<RunOutcome>> = None;
        let outcome = loop {
            let ws: Socket = client_rx.recv().expect("acceptor outlives the serve loop");
            match run_client(ws, &session, &config, &mut launched) {
                ClientEnd::Exited(outcome) => break outcome,
                ClientEnd::Disconnected => {
                    if let Some(handle) = launched.take() {
                        session.debugger().set_output(None);
                        session.debugger().detach();
                        break handle.join().expect("runtime panicked");
                    }
                    control_busy.store(false, Ordering::SeqCst);
                }
            }
        };

        let (ack_tx, ack_rx) = mpsc::channel();
        let _ = trace_tx.send(TraceCmd::Finish(ack_tx));
        let _ = ack_rx.recv();
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        drop(trace_tx);
        drop(session);
        let _ = trace_writer.join();
        Ok(outcome)
    }
}

fn accept_loop(
    listener: TcpListener,
    clients: Sender<Socket>,
    trace: Sender<TraceCmd>,
    control_busy: Arc<AtomicBool>,
    trace_busy: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
) {
    while !stop.load(Ordering::SeqCst) {
        let stream = match listener.accept() {
            Ok((stream, _)) => stream,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(POLL);
                continue;
            }
            Err(_) => continue,
        };
        let (clients, trace) = (clients.clone(), trace.clone());
        let (control_busy, trace_busy) = (control_busy.clone(), trace_busy.clone());
        thread::spawn(move || {
            if stream.set_nonblocking(false).is_err() {
                return;
            }
            let mut endpoint = None;
            #[allow(clippy::result_large_err)]
            let result = tungstenite::accept_hdr(stream, |req: &Request, resp: Response| {
                let (protocol, busy) = match req.uri().path() {
                    CONTROL_PATH => (CONTROL_PROTOCOL, &control_busy),
                    TRACE_PATH => (TRACE_PROTOCOL, &trace_busy),
                    _ => return Err(refuse(StatusCode::NOT_FOUND, "unknown endpoint")),
                };
                let resp = negotiate(req, resp, protocol)?;
                if busy.swap(true, Ordering::SeqCst) {
                    return Err(refuse(StatusCode::CONFLICT, "a debugger is already connected"));
                }
                endpoint = Some(protocol);
                Ok(resp)
            });
            let Ok(ws) = result else {
                // a failed handshake after claiming the slot releases it
                match endpoint {
                    Some(CONTROL_PROTOCOL) => control_busy.store(false, Ordering::SeqCst),
                    Some(_) => trace_busy.store(false, Ordering::SeqCst),
                    None => {}
                }
                return;
            };
            match endpoint {
                Some(CONTROL_PROTOCOL) => {
                    let _ = clients.send(ws);
                }
                _ => {
                    let _ = trace.send(TraceCmd::Attach(Box::new(ws)));
                }
            }
        });
    }
}

fn refuse(status: StatusCode, reason: &str) -> ErrorResponse {
    let mut resp = ErrorResponse::new(Some(reason.to_string()));
    *resp.status_mut() = status;
    resp
}

/// Echoes `protocol` if the client offered it; rejects clients that offer
/// only other subprotocols.
// The error type is fixed by tungstenite's handshake callback.
#[allow(clippy::result_large_err)]
fn negotiate(req: &Request, mut resp: Response, protocol: &'static str) -> Result<Response, ErrorResponse> {
    let Some(offered) = req.headers().get("Sec-WebSocket-Protocol") else { return Ok(resp) };
    let offered = offered.to_str().unwrap_or("");
    if offered.split(',').any(|p| p.trim() == protocol) {
        resp.headers_mut().insert("Sec-WebSocket-Protocol", HeaderValue::from_static(protocol));
        Ok(resp)
    } else {
        Err(refuse(StatusCode::BAD_REQUEST, "unsupported subprotocol"))
    }
}

fn trace_writer(rx: Receiver<TraceCmd>, busy: Arc<AtomicBool>) {
    let mut socket: Option<Socket> = None;
    let mut pending: Vec<Vec<u8>> = Vec::new();
    let mut done = false;
    while let Ok(cmd) = rx.recv() {
        match cmd {
            TraceCmd::Bytes(bytes) if done => drop(bytes),
            TraceCmd::Bytes(bytes) => match &mut socket {
                Some(ws) => {
                    if ws.send(Message::Binary(bytes)).is_err() {
                        socket = None;
                        busy.store(false, Ordering::SeqCst);
                    }
                }
                None => pending.push(bytes),
            },
            TraceCmd::Attach(mut ws) => {
                if done {
                    let _ = ws.close(None);
                    continue;
                }
                let ok = pending.drain(..).all(|b| ws.send(Message::Binary(b)).is_ok());
                if ok {
                    socket = Some(*ws);
                }
            }
            TraceCmd::Finish(ack) => {
                while let Ok(TraceCmd::Bytes(bytes)) = rx.try_recv() {
                    if let Some(ws) = &mut socket {
                        let _ = ws.send(Message::Binary(bytes));
                    }
                }
                if let Some(mut ws) = socket.take() {
                    let _ = ws.get_ref().set_read_timeout(Some(CLOSE_GRACE));
                    let _ = ws.close(None);
                    // let the close handshake complete
                    while ws.read().is_ok() {}
                }
                done = true;
                busy.store(true, Ordering::SeqCst);
                let _ = ack.send(());
            }
        }
    }
}

fn send(ws: &mut Socket, msg: &ControlMessage) -> bool {
    ws.send(Message::Text(msg.encode())).is_ok()
}

fn run_client(
    mut ws: Socket,
    session: &Session,
    config: &RunConfig,
    launched: &mut Option<JoinHandle<RunOutcome>>,
) -> ClientEnd {
    let debugger = session.debugger();
    for msg in [session.metadata_message(), session.source_message(), session.initial_symbols()] {
        if !send(&mut ws, &msg) {
            return ClientEnd::Disconnected;
        }
    }
    let (out_tx, out_rx) = mpsc::channel();
    debugger.set_output(Some(out_tx));
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return ClientEnd::Disconnected;
    }
    let mut state = if launched.is_some() { State::Launched } else { State::Initialized };
    loop {
        // outbound first, so replies never overtake earlier stops
        while let Ok(msg) = out_rx.try_recv() {
            let exit = matches!(msg, ControlMessage::ProgramExit { .. });
            if !send(&mut ws, &msg) {
                return ClientEnd::Disconnected;
            }
            if exit {
                let outcome = launched.take().expect("exit implies launch").join().expect("runtime panicked");
                debugger.set_output(None);
                let _ = ws.close(None);
                let _ = ws.get_ref().set_read_timeout(Some(CLOSE_GRACE));
                while ws.read().is_ok() {}
                return ClientEnd::Exited(outcome);
            }
        }
        let text = match ws.read() {
            Ok(Message::Text(text)) => text,
            Ok(Message::Binary(bytes)) => match String::from_utf8(bytes) {
                Ok(text) => text,
                Err(_) => continue,
            },
            Ok(Message::Close(_)) => return ClientEnd::Disconnected,
            Ok(_) => continue,
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) =>
            {
                continue
            }
            Err(_) => return ClientEnd::Disconnected,
        };
        let reply = match ControlMessage::decode(&text) {
            Err(e) => Some(ControlMessage::Error { activity_id: None, message: e.to_string() }),
            Ok(ControlMessage::Launch) => {
                if state == State::Initialized {
                    state = State::Launched;
                    *launched = session.launch(config.clone());
                    None
                } else {
                    Some(ControlMessage::Error {
                        activity_id: None,
                        message: format!("launch is not accepted once {}", state.name()),
                    })
                }
            }
            Ok(msg) => debugger
                .handle(&msg)
                .unwrap_or_else(|e| Some(ControlMessage::Error { activity_id: None, message: e.to_string() })),
        };
        if let Some(reply) = reply {
            if !send(&mut ws, &reply) {
                return ClientEnd::Disconnected;
            }
        }
    }
}

/// Runs [`Server::serve`] on its own thread.
pub fn spawn_server(
    server: Server,
    source: SourceUnit,
    catalog: Arc<MetaDataCatalog>,
    config: RunConfig,
) -> JoinHandle<Result<RunOutcome, ServerError>> {
    thread::spawn(move || server.serve(source, catalog, config))
}

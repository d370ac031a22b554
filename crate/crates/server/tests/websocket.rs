use std::collections::HashMap;
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use polydbg_core::minilang::SourceUnit;
use polydbg_core::runtime::{RunConfig, RunOutcome};
use polydbg_protocol::control::BreakpointSpec;
use polydbg_protocol::trace::decode_trace_stream;
use polydbg_protocol::{build_shipped_catalog, ControlMessage, TraceEvent};
use polydbg_server::{spawn_server, Server, ServerError, CONTROL_PROTOCOL, TRACE_PROTOCOL};
use tungstenite::client::IntoClientRequest;
use tungstenite::{Message, WebSocket};

type Ws = WebSocket<TcpStream>;

fn program(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/programs").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn start(text: &str) -> (SocketAddr, JoinHandle<Result<RunOutcome, ServerError>>) {
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let handle = spawn_server(server, SourceUnit::new("prog.pd", text), Arc::new(build_shipped_catalog()), RunConfig::default());
    (addr, handle)
}

#[allow(clippy::result_large_err)]
fn connect(addr: SocketAddr, path: &str, protocol: &str) -> Result<Ws, tungstenite::Error> {
    let mut req = format!("ws://{addr}{path}").into_client_request().unwrap();
    req.headers_mut().insert("Sec-WebSocket-Protocol", protocol.parse().unwrap());
    let stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let (ws, resp) = tungstenite::client(req, stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => unreachable!("blocking stream"),
    })?;
    assert_eq!(resp.headers().get("Sec-WebSocket-Protocol").unwrap(), protocol);
    Ok(ws)
}

fn recv(ws: &mut Ws) -> ControlMessage {
    loop {
        match ws.read().expect("control message") {
            Message::Text(t) => return ControlMessage::decode(&t).unwrap(),
            Message::Close(_) => panic!("closed"),
            _ => {}
        }
    }
}

fn send(ws: &mut Ws, msg: &ControlMessage) {
    ws.send(Message::Text(msg.encode())).unwrap();
}

/// Next message that is not a Symbols batch.
fn recv_skipping_symbols(ws: &mut Ws) -> ControlMessage {
    loop {
        match recv(ws) {
            ControlMessage::Symbols { .. } => {}
            other => return other,
        }
    }
}

fn read_trace(mut ws: Ws) -> Vec<u8> {
    let mut bytes = Vec::new();
    loop {
        match ws.read() {
            Ok(Message::Binary(b)) => bytes.extend(b),
            Ok(Message::Close(_)) | Err(_) => return bytes,
            Ok(_) => {}
        }
    }
}

fn handshake(ws: &mut Ws) -> (u16, Vec<polydbg_protocol::TaggedLocation>) {
    assert!(matches!(recv(ws), ControlMessage::Metadata { .. }));
    let ControlMessage::Source { file_symbol, locations, .. } = recv(ws) else { panic!("expected source") };
    let ControlMessage::Symbols { symbols } = recv(ws) else { panic!("expected symbols") };
    assert!(symbols.iter().any(|s| s.id == file_symbol && &*s.text == "prog.pd"));
    (file_symbol.0, locations)
}

fn assert_balanced(events: &[(u64, TraceEvent)]) {
    let mut depth: HashMap<u64, i64> = HashMap::new();
    for (a, e) in events {
        match e {
            TraceEvent::ScopeStart { .. } => *depth.entry(*a).or_default() += 1,
            TraceEvent::ScopeEnd { .. } => {
                let d = depth.entry(*a).or_default();
                *d -= 1;
                assert!(*d >= 0, "scope end without start on {a}");
            }
            _ => {}
        }
    }
    assert!(depth.values().all(|d| *d == 0), "{depth:?}");
}

#[test]
fn launch_without_breakpoints_runs_to_exit() {
    let (addr, server) = start(&program("pingpong.pd"));
    let mut control = connect(addr, "/control", CONTROL_PROTOCOL).unwrap();
    let trace = connect(addr, "/trace", TRACE_PROTOCOL).unwrap();
    handshake(&mut control);
    send(&mut control, &ControlMessage::Launch);
    assert_eq!(recv_skipping_symbols(&mut control), ControlMessage::ProgramExit { status: 0 });
    let bytes = read_trace(trace);
    let events = decode_trace_stream(&bytes, &build_shipped_catalog()).expect("complete trace");
    assert_eq!(events.iter().filter(|(_, e)| matches!(e, TraceEvent::ActivityCreation { .. })).count(), 3);
    assert_balanced(&events);
    let outcome = server.join().unwrap().unwrap();
    assert_eq!(outcome.status, 0);
}

#[test]
fn transaction_walkthrough_over_the_wire() {
    let (addr, server) = start(&program("transfer.pd"));
    let mut control = connect(addr, "/control", CONTROL_PROTOCOL).unwrap();
    let trace = connect(addr, "/trace", TRACE_PROTOCOL).unwrap();
    let (_, locations) = handshake(&mut control);
    let atomic = locations.iter().find(|l| l.tags.iter().any(|t| t == "Atomic")).unwrap().location;
    send(
        &mut control,
        &ControlMessage::BreakpointUpdate {
            breakpoint: BreakpointSpec { breakpoint_type: "before-transaction".into(), location: atomic, enabled: true },
        },
    );
    send(&mut control, &ControlMessage::Launch);

    let ControlMessage::Stopped { activity_id, activity_type, location, scopes } = recv_skipping_symbols(&mut control)
    else {
        panic!("expected stop")
    };
    assert_eq!((activity_type.as_str(), location, scopes.len()), ("Thread", atomic, 0));

    send(&mut control, &ControlMessage::Step { activity_id, step: "step-into".into() });
    let ControlMessage::Stopped { scopes, location, .. } = recv_skipping_symbols(&mut control) else { panic!() };
    assert_eq!(location.line, atomic.line + 1);
    assert_eq!(scopes.iter().map(|s| s.scope_type.as_str()).collect::<Vec<_>>(), vec!["Transaction"]);

    send(&mut control, &ControlMessage::StackTraceRequest { activity_id });
    let ControlMessage::StackTraceResponse { frames, .. } = recv_skipping_symbols(&mut control) else { panic!() };
    assert_eq!(frames.len(), 1);
    send(&mut control, &ControlMessage::VariablesRequest { activity_id, frame_index: 0 });
    let ControlMessage::VariablesResponse { variables, .. } = recv_skipping_symbols(&mut control) else { panic!() };
    assert!(variables.iter().any(|v| v.name == "amount" && v.value == "30"));

    send(&mut control, &ControlMessage::Step { activity_id, step: "step-to-commit".into() });
    let ControlMessage::Stopped { .. } = recv_skipping_symbols(&mut control) else { panic!() };
    send(&mut control, &ControlMessage::Step { activity_id, step: "resume".into() });
    assert_eq!(recv_skipping_symbols(&mut control), ControlMessage::ProgramExit { status: 0 });
    let events = decode_trace_stream(&read_trace(trace), &build_shipped_catalog()).unwrap();
    assert_balanced(&events);
    assert_eq!(server.join().unwrap().unwrap().output, vec!["70 30"]);
}

#[test]
fn second_client_and_bad_requests_are_refused() {
    let (addr, server) = start("fn main() {}");
    let mut control = connect(addr, "/control", CONTROL_PROTOCOL).unwrap();
    handshake(&mut control);
    match connect(addr, "/control", CONTROL_PROTOCOL) {
        Err(tungstenite::Error::Http(resp)) => assert_eq!(resp.status(), 409),
        other => panic!("second client accepted: {:?}", other.map(|_| ())),
    }
    match connect(addr, "/nowhere", CONTROL_PROTOCOL) {
        Err(tungstenite::Error::Http(resp)) => assert_eq!(resp.status(), 404),
        other => panic!("unknown path accepted: {:?}", other.map(|_| ())),
    }
    match connect(addr, "/trace", "something-else") {
        Err(tungstenite::Error::Http(resp)) => assert_eq!(resp.status(), 400),
        other => panic!("wrong subprotocol accepted: {:?}", other.map(|_| ())),
    }
    control.send(Message::Text("{not json".into())).unwrap();
    assert!(matches!(recv(&mut control), ControlMessage::Error { .. }));
    send(&mut control, &ControlMessage::Step { activity_id: 1, step: "step-into".into() });
    assert!(matches!(recv(&mut control), ControlMessage::Error { .. }));
    send(&mut control, &ControlMessage::Launch);
    send(&mut control, &ControlMessage::Launch);
    let mut saw_error = false;
    loop {
        match recv(&mut control) {
            ControlMessage::Error { message, .. } => {
                assert!(message.contains("launch"), "{message}");
                saw_error = true;
            }
            ControlMessage::ProgramExit { status } => {
                assert_eq!(status, 0);
                break;
            }
            _ => {}
        }
    }
    // the refusal can race the exit; either way the program ran once
    let _ = saw_error;
    assert_eq!(server.join().unwrap().unwrap().status, 0);
}

#[test]
fn disconnect_after_launch_continues_headless() {
    let (addr, server) = start(&program("channels.pd"));
    let mut control = connect(addr, "/control", CONTROL_PROTOCOL).unwrap();
    let (_, locations) = handshake(&mut control);
    let read = locations.iter().find(|l| l.tags.iter().any(|t| t == "ChannelRead")).unwrap().location;
    send(
        &mut control,
        &ControlMessage::BreakpointUpdate {
            breakpoint: BreakpointSpec { breakpoint_type: "before-channel-receive".into(), location: read, enabled: true },
        },
    );
    send(&mut control, &ControlMessage::Launch);
    assert!(matches!(recv_skipping_symbols(&mut control), ControlMessage::Stopped { .. }));
    drop(control);
    let started = Instant::now();
    let outcome = server.join().unwrap().unwrap();
    assert!(started.elapsed() < Duration::from_secs(10));
    assert_eq!(outcome.output, vec!["sum 6"]);
}

#[test]
fn client_leaving_before_launch_frees_the_slot() {
    let (addr, server) = start("fn main() { print(1); }");
    let mut first = connect(addr, "/control", CONTROL_PROTOCOL).unwrap();
    handshake(&mut first);
    first.close(None).unwrap();
    while first.read().is_ok() {}
    let mut second = loop {
        match connect(addr, "/control", CONTROL_PROTOCOL) {
            Ok(ws) => break ws,
            Err(_) => std::thread::sleep(Duration::from_millis(20)),
        }
    };
    handshake(&mut second);
    send(&mut second, &ControlMessage::Launch);
    assert_eq!(recv_skipping_symbols(&mut second), ControlMessage::ProgramExit { status: 0 });
    assert_eq!(server.join().unwrap().unwrap().output, vec!["1"]);
}

#[test]
fn stops_alternate_with_steps() {
    let (addr, server) = start(&program("counter.pd"));
    let mut control = connect(addr, "/control", CONTROL_PROTOCOL).unwrap();
    let (_, locations) = handshake(&mut control);
    let acquire = locations.iter().find(|l| l.tags.iter().any(|t| t == "AcquireLock")).unwrap().location;
    send(
        &mut control,
        &ControlMessage::BreakpointUpdate {
            breakpoint: BreakpointSpec { breakpoint_type: "after-acquire".into(), location: acquire, enabled: true },
        },
    );
    send(&mut control, &ControlMessage::Launch);
    let mut stopped: HashMap<u64, bool> = HashMap::new();
    let mut stops = 0;
    loop {
        match recv_skipping_symbols(&mut control) {
            ControlMessage::Stopped { activity_id, .. } => {
                assert!(!stopped.insert(activity_id, true).unwrap_or(false), "double stop of {activity_id}");
                stops += 1;
                if stops == 10 {
                    send(
                        &mut control,
                        &ControlMessage::BreakpointUpdate {
                            breakpoint: BreakpointSpec {
                                breakpoint_type: "after-acquire".into(),
                                location: acquire,
                                enabled: false,
                            },
                        },
                    );
                }
                stopped.insert(activity_id, false);
                send(&mut control, &ControlMessage::Step { activity_id, step: "resume".into() });
            }
            ControlMessage::ProgramExit { status } => {
                assert_eq!(status, 0);
                break;
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    assert!(stops >= 10);
    assert_eq!(server.join().unwrap().unwrap().output, vec!["200"]);
}

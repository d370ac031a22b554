#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::time::Duration;

use polydbg_core::debug::SharedBuffer;
use polydbg_core::minilang::SourceUnit;
use polydbg_core::runtime::{RunConfig, RunOutcome};
use polydbg_core::Session;
use polydbg_protocol::trace::decode_trace_stream;
use polydbg_protocol::{build_shipped_catalog, ControlMessage, MetaDataCatalog, TraceEvent};

pub const TIMEOUT: Duration = Duration::from_secs(10);

pub fn program(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn catalog() -> Arc<MetaDataCatalog> {
    Arc::new(build_shipped_catalog())
}

pub struct Harness {
    pub session: Session,
    pub trace: SharedBuffer,
    pub control: Receiver<ControlMessage>,
}

pub fn harness(text: &str) -> Harness {
    let trace = SharedBuffer::new();
    let session = Session::new(SourceUnit::new("test.pd", text), catalog(), Box::new(trace.clone()))
        .expect("program parses");
    let (tx, rx) = mpsc::channel();
    session.debugger().set_output(Some(tx));
    Harness { session, trace, control: rx }
}

impl Harness {
    pub fn events(&self) -> Vec<(u64, TraceEvent)> {
        decode_trace_stream(&self.trace.bytes(), &catalog()).expect("trace decodes")
    }

    /// Next Stopped message, skipping symbols and other chatter.
    pub fn next_stop(&self) -> (u64, ControlMessage) {
        loop {
            let msg = self.control.recv_timeout(TIMEOUT).expect("expected a stop");
            if let ControlMessage::Stopped { activity_id, .. } = &msg {
                return (*activity_id, msg);
            }
            if let ControlMessage::ProgramExit { .. } = msg {
                panic!("program exited while waiting for a stop");
            }
        }
    }
}

/// Runs without a debugger attached and returns outcome plus decoded trace.
pub fn run(text: &str) -> (RunOutcome, Vec<(u64, TraceEvent)>) {
    let h = harness(text);
    let outcome = h.session.run(RunConfig::default());
    let events = h.events();
    (outcome, events)
}

use polydbg_protocol::control::BreakpointSpec;
use polydbg_protocol::{SourceLocation, Tag};

impl Harness {
    /// The tagged location on `line` carrying `tag`.
    pub fn site(&self, line: u32, tag: Tag) -> SourceLocation {
        let ControlMessage::Source { locations, .. } = self.session.source_message() else { unreachable!() };
        locations
            .into_iter()
            .find(|l| l.location.line == line && l.tags.iter().any(|t| t == tag.as_str()))
            .unwrap_or_else(|| panic!("no {tag} on line {line}"))
            .location
    }

    pub fn breakpoint(&self, name: &str, line: u32, tag: Tag) {
        let spec = BreakpointSpec { breakpoint_type: name.into(), location: self.site(line, tag), enabled: true };
        self.session.debugger().update_breakpoint(&spec).expect("breakpoint accepted");
    }

    pub fn step(&self, activity: u64, name: &str) {
        self.session.debugger().step(activity, name).unwrap_or_else(|e| panic!("{name}: {e}"));
    }

    /// Resumes every further stop until the program exits; returns the
    /// exit status and the (activity, line) of each stop seen.
    pub fn drain(&self) -> (i32, Vec<(u64, u32)>) {
        let mut stops = Vec::new();
        loop {
            match self.control.recv_timeout(TIMEOUT).expect("program should exit") {
                ControlMessage::Stopped { activity_id, location, .. } => {
                    stops.push((activity_id, location.line));
                    self.step(activity_id, "resume");
                }
                ControlMessage::ProgramExit { status } => return (status, stops),
                _ => {}
            }
        }
    }
}

pub fn stop_line(msg: &ControlMessage) -> u32 {
    match msg {
        ControlMessage::Stopped { location, .. } => location.line,
        other => panic!("not a stop: {other:?}"),
    }
}

pub fn stop_scopes(msg: &ControlMessage) -> Vec<String> {
    match msg {
        ControlMessage::Stopped { scopes, .. } => scopes.iter().map(|s| s.scope_type.clone()).collect(),
        other => panic!("not a stop: {other:?}"),
    }
}

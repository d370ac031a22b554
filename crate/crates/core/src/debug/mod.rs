//! Breakpoints, stepping and suspension.
//!
//! The runtime calls [`Debugger::hook`] at every tagged point, naming the
//! phases that hold there. A hook suspends the calling activity when an
//! enabled breakpoint matches one of its phases at the phase's site, when a
//! one-shot flag planted by a cross-activity step matches, or when the
//! activity's own stepping request completes. Several reasons at one hook
//! produce a single suspension.

pub mod phase;
pub mod trace;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use polydbg_protocol::control::{ActiveScope, BreakpointSpec, StackFrame, Variable};
use polydbg_protocol::{
    applicable_breakpoints, applicable_stepping_ops, ControlMessage, MetaDataCatalog, SymbolId, SymbolTable,
};
use thiserror::Error;

use crate::minilang::tags::{from_location, to_location};
use crate::minilang::Span;
pub use phase::{FlagKey, Phase};
pub use trace::{ActivityBuffer, NullSink, SharedBuffer, TraceHub, TraceSink};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DebugError {
    #[error("unknown breakpoint type `{0}`")]
    UnknownBreakpointType(String),
    #[error("breakpoint type `{name}` does not apply at {line}:{column}")]
    IncompatibleLocation { name: String, line: u32, column: u16 },
    #[error("unknown stepping type `{0}`")]
    UnknownSteppingType(String),
    #[error("no activity with id {0}")]
    UnknownActivity(u64),
    #[error("activity {0} is not suspended")]
    NotSuspended(u64),
    #[error("stepping type `{name}` is not applicable to activity {activity} here")]
    NotApplicable { name: String, activity: u64 },
    #[error("activity {activity} has no frame {frame}")]
    NoSuchFrame { activity: u64, frame: u32 },
    #[error("`{0}` is not a request")]
    UnexpectedMessage(&'static str),
}

/// What a suspended activity does next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resume {
    Continue,
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScopeEntry {
    pub label: &'static str,
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSnapshot {
    pub name: String,
    pub location: Span,
    pub variables: Vec<(String, String)>,
}

/// Innermost frame first.
pub type Snapshot = Vec<FrameSnapshot>;

/// Everything the runtime knows at a hook.
#[derive(Debug, Clone, Copy)]
pub struct HookPoint<'a> {
    /// Phases holding here, each with the tagged site a breakpoint must be
    /// set on to match it.
    pub phases: &'a [(Phase, Span)],
    /// Where the activity is reported to stand.
    pub location: Span,
    pub keys: &'a [FlagKey],
    pub depth: usize,
    pub scopes: &'a [ScopeEntry],
    /// Promise the current turn resolves, if any.
    pub turn_promise: Option<u64>,
    /// Lock of the innermost monitor, if any.
    pub monitor_lock: Option<u64>,
    /// Suspend regardless of breakpoints and flags.
    pub forced: bool,
}

impl HookPoint<'_> {
    fn has(&self, phase: Phase) -> bool {
        self.phases.iter().any(|(p, _)| *p == phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepRequest {
    Into,
    Over(usize),
    Return(usize),
    Phase(Phase),
    Pause,
}

impl StepRequest {
    fn completes_at(self, p: &HookPoint) -> bool {
        match self {
            StepRequest::Into => p.has(Phase::Statement),
            StepRequest::Over(depth) => p.has(Phase::Statement) && p.depth <= depth,
            StepRequest::Return(depth) => p.has(Phase::Statement) && p.depth < depth,
            StepRequest::Phase(phase) => p.has(phase),
            StepRequest::Pause => true,
        }
    }
}

#[derive(Debug, Clone)]
struct Suspension {
    location: Span,
    depth: usize,
    keys: Vec<FlagKey>,
    scopes: Vec<ScopeEntry>,
    turn_promise: Option<u64>,
    monitor_lock: Option<u64>,
    frames: Snapshot,
}

#[derive(Debug, Default)]
struct ActState {
    request: Option<StepRequest>,
    suspended: Option<Suspension>,
    resume: Option<Resume>,
}

/// Debugger-side record of one activity.
#[derive(Debug)]
pub struct ActivityDebug {
    id: u64,
    label: &'static str,
    state: Mutex<ActState>,
    cv: Condvar,
}

impl ActivityDebug {
    pub fn id(&self) -> u64 {
        self.id
    }

    fn wake(&self, resume: Resume) {
        let mut st = self.state.lock().unwrap();
        if st.suspended.is_some() {
            st.resume = Some(resume);
        }
        self.cv.notify_all();
    }
}

pub struct Debugger {
    catalog: Arc<MetaDataCatalog>,
    file_symbol: SymbolId,
    tags: HashMap<Span, Vec<String>>,
    symbols: Arc<SymbolTable>,
    trace: Arc<TraceHub>,
    out: Mutex<Option<Sender<ControlMessage>>>,
    breakpoints: RwLock<HashSet<(Phase, Span)>>,
    flags: Mutex<HashSet<(Phase, FlagKey)>>,
    activities: Mutex<HashMap<u64, Arc<ActivityDebug>>>,
    armed: AtomicBool,
    rearm_lock: Mutex<()>,
    terminated: AtomicBool,
}

impl Debugger {
    pub fn new(
        catalog: Arc<MetaDataCatalog>,
        file_symbol: SymbolId,
        tags: HashMap<Span, Vec<String>>,
        symbols: Arc<SymbolTable>,
        trace: Arc<TraceHub>,
    ) -> Self {
        Self {
            catalog,
            file_symbol,
            tags,
            symbols,
            trace,
            out: Mutex::new(None),
            breakpoints: RwLock::new(HashSet::new()),
            flags: Mutex::new(HashSet::new()),
            activities: Mutex::new(HashMap::new()),
            armed: AtomicBool::new(false),
            rearm_lock: Mutex::new(()),
            terminated: AtomicBool::new(false),
        }
    }

    pub fn catalog(&self) -> &MetaDataCatalog {
        &self.catalog
    }

    pub fn trace(&self) -> &Arc<TraceHub> {
        &self.trace
    }

    pub fn symbols(&self) -> &Arc<SymbolTable> {
        &self.symbols
    }

    pub fn file_symbol(&self) -> SymbolId {
        self.file_symbol
    }

    /// Where outgoing messages (Stopped, Symbols, Error, ProgramExit) go.
    pub fn set_output(&self, out: Option<Sender<ControlMessage>>) {
        *self.out.lock().unwrap() = out;
    }

    pub fn send(&self, msg: ControlMessage) {
        if let Some(out) = self.out.lock().unwrap().as_ref() {
            let _ = out.send(msg);
        }
    }

    /// Sends a Symbols message for symbols not yet announced.
    pub fn emit_symbols(&self) {
        let symbols = self.symbols.take_unsent();
        if !symbols.is_empty() {
            self.send(ControlMessage::Symbols { symbols });
        }
    }

    pub fn report_error(&self, activity_id: Option<u64>, message: String) {
        self.send(ControlMessage::Error { activity_id, message });
    }

    pub fn register(&self, id: u64, activity_type: &'static str) -> Arc<ActivityDebug> {
        let act = Arc::new(ActivityDebug { id, label: activity_type, state: Mutex::default(), cv: Condvar::new() });
        self.activities.lock().unwrap().insert(id, act.clone());
        act
    }

    pub fn forget(&self, id: u64) {
        let removed = self.activities.lock().unwrap().remove(&id);
        if removed.is_some_and(|a| a.state.lock().unwrap().request.is_some()) {
            self.rearm();
        }
    }

    /// Set once the program is being torn down; blocking waits poll it.
    pub fn stop_flag(&self) -> &AtomicBool {
        &self.terminated
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.load(Ordering::SeqCst)
    }

    /// Ends the program: every suspended activity returns
    /// [`Resume::Terminate`] and blocking operations give up.
    pub fn terminate(&self) {
        self.terminated.store(true, Ordering::SeqCst);
        for act in self.activities.lock().unwrap().values() {
            act.wake(Resume::Terminate);
        }
    }

    /// Ids of the currently suspended activities, ascending.
    pub fn suspended(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .activities
            .lock()
            .unwrap()
            .values()
            .filter(|a| a.state.lock().unwrap().suspended.is_some())
            .map(|a| a.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    fn rearm(&self) {
        let _guard = self.rearm_lock.lock().unwrap();
        let armed = !self.breakpoints.read().unwrap().is_empty()
            || !self.flags.lock().unwrap().is_empty()
            || self.activities.lock().unwrap().values().any(|a| a.state.lock().unwrap().request.is_some());
        self.armed.store(armed, Ordering::SeqCst);
    }

    fn plant(&self, phase: Phase, key: FlagKey) {
        self.flags.lock().unwrap().insert((phase, key));
    }

    /// Removes a flag, reporting whether it was planted.
    pub fn take_flag(&self, phase: Phase, key: FlagKey) -> bool {
        if !self.armed.load(Ordering::SeqCst) {
            return false;
        }
        let taken = self.flags.lock().unwrap().remove(&(phase, key));
        if taken {
            self.rearm();
        }
        taken
    }

    /// Clears breakpoints, flags and requests and resumes everything; used
    /// when the client goes away.
    pub fn detach(&self) {
        self.breakpoints.write().unwrap().clear();
        self.flags.lock().unwrap().clear();
        let acts: Vec<_> = self.activities.lock().unwrap().values().cloned().collect();
        for act in &acts {
            act.state.lock().unwrap().request = None;
        }
        self.rearm();
        for act in acts {
            act.wake(Resume::Continue);
        }
    }

    pub fn update_breakpoint(&self, spec: &BreakpointSpec) -> Result<(), DebugError> {
        let phase = Phase::from_breakpoint_name(&spec.breakpoint_type)
            .filter(|_| self.catalog.breakpoint_type(&spec.breakpoint_type).is_some())
            .ok_or_else(|| DebugError::UnknownBreakpointType(spec.breakpoint_type.clone()))?;
        let span = from_location(&spec.location);
        let applicable = spec.location.file_symbol == self.file_symbol
            && self
                .tags
                .get(&span)
                .is_some_and(|tags| applicable_breakpoints(tags, &self.catalog).contains(&spec.breakpoint_type.as_str()));
        if !applicable {
            return Err(DebugError::IncompatibleLocation {
                name: spec.breakpoint_type.clone(),
                line: spec.location.line,
                column: spec.location.column,
            });
        }
        {
            let mut bps = self.breakpoints.write().unwrap();
            if spec.enabled {
                bps.insert((phase, span));
            } else {
                bps.remove(&(phase, span));
            }
        }
        self.rearm();
        Ok(())
    }

    fn activity(&self, id: u64) -> Result<Arc<ActivityDebug>, DebugError> {
        self.activities.lock().unwrap().get(&id).cloned().ok_or(DebugError::UnknownActivity(id))
    }

    /// Stepping types applicable to a suspended activity right now.
    pub fn applicable_steps(&self, activity: u64) -> Result<Vec<String>, DebugError> {
        let act = self.activity(activity)?;
        let st = act.state.lock().unwrap();
        let susp = st.suspended.as_ref().ok_or(DebugError::NotSuspended(activity))?;
        Ok(self.steps_for(act.label, susp).into_iter().map(String::from).collect())
    }

    fn steps_for(&self, label: &str, susp: &Suspension) -> Vec<&str> {
        let no_tags = Vec::new();
        let tags = self.tags.get(&susp.location).unwrap_or(&no_tags);
        let scopes: Vec<&str> = susp.scopes.iter().map(|s| s.label).collect();
        applicable_stepping_ops(tags, label, &scopes, &self.catalog)
    }

    pub fn step(&self, activity: u64, name: &str) -> Result<(), DebugError> {
        if self.catalog.stepping_type(name).is_none() {
            return Err(DebugError::UnknownSteppingType(name.to_string()));
        }
        if name == "stop" {
            self.terminate();
            return Ok(());
        }
        let act = self.activity(activity)?;
        let mut flag = None;
        {
            let mut st = act.state.lock().unwrap();
            let Some(susp) = st.suspended.as_ref() else {
                if name == "pause" {
                    st.request = Some(StepRequest::Pause);
                    drop(st);
                    self.rearm();
                    return Ok(());
                }
                return Err(DebugError::NotSuspended(activity));
            };
            if !self.steps_for(act.label, susp).contains(&name) {
                return Err(DebugError::NotApplicable { name: name.to_string(), activity });
            }
            let key = |f: fn(&FlagKey) -> Option<FlagKey>| susp.keys.iter().find_map(f);
            let request = match name {
                "pause" => return Ok(()),
                "resume" => None,
                "step-into" => Some(StepRequest::Into),
                "step-over" => Some(StepRequest::Over(susp.depth)),
                "return" => Some(StepRequest::Return(susp.depth)),
                "step-to-next-transaction" => Some(StepRequest::Phase(Phase::BeforeTransaction)),
                "step-to-commit" => Some(StepRequest::Phase(Phase::BeforeCommit)),
                "step-after-commit" => Some(StepRequest::Phase(Phase::AfterCommit)),
                "step-to-release" => Some(StepRequest::Phase(Phase::BeforeRelease)),
                _ => {
                    flag = match name {
                        "step-into-activity" => key(|k| matches!(k, FlagKey::Child(_)).then_some(*k))
                            .map(|k| (Phase::ActivityExecution, k)),
                        "return-from-activity" => Some((Phase::AfterJoin, FlagKey::Joined(activity))),
                        "step-to-message-receiver" => key(|k| matches!(k, FlagKey::Message(_)).then_some(*k))
                            .map(|k| (Phase::ActorMessageReceiver, k)),
                        "step-to-promise-resolver" => key(|k| matches!(k, FlagKey::Promise(_)).then_some(*k))
                            .map(|k| (Phase::BeforePromiseResolution, k)),
                        "step-to-promise-resolution" => key(|k| matches!(k, FlagKey::Promise(_)).then_some(*k))
                            .map(|k| (Phase::OnPromiseResolution, k)),
                        "step-to-next-turn" => Some((Phase::TurnStart, FlagKey::Actor(activity))),
                        "return-from-turn-to-resolution" => {
                            susp.turn_promise.map(|p| (Phase::OnPromiseResolution, FlagKey::Promise(p)))
                        }
                        "step-to-channel-receiver" => {
                            Some((Phase::AfterChannelReceive, FlagKey::ChannelSender(activity)))
                        }
                        "step-to-channel-sender" => {
                            Some((Phase::AfterChannelSend, FlagKey::ChannelReceiver(activity)))
                        }
                        "step-to-next-acquire" => susp.monitor_lock.map(|l| (Phase::AfterAcquire, FlagKey::Lock(l))),
                        _ => None,
                    };
                    None
                }
            };
            st.request = request;
        }
        if let Some((phase, key)) = flag {
            self.plant(phase, key);
        }
        self.rearm();
        act.wake(Resume::Continue);
        Ok(())
    }

    fn frames(&self, activity: u64) -> Result<Snapshot, DebugError> {
        let act = self.activity(activity)?;
        let st = act.state.lock().unwrap();
        Ok(st.suspended.as_ref().ok_or(DebugError::NotSuspended(activity))?.frames.clone())
    }

    pub fn stack_trace(&self, activity: u64) -> Result<ControlMessage, DebugError> {
        let frames = self
            .frames(activity)?
            .into_iter()
            .map(|f| StackFrame {
                method_name_symbol: self.symbols.intern(&f.name),
                location: to_location(f.location, self.file_symbol),
            })
            .collect();
        self.emit_symbols();
        Ok(ControlMessage::StackTraceResponse { activity_id: activity, frames })
    }

    pub fn variables(&self, activity: u64, frame_index: u32) -> Result<ControlMessage, DebugError> {
        let frames = self.frames(activity)?;
        let frame = frames
            .get(frame_index as usize)
            .ok_or(DebugError::NoSuchFrame { activity, frame: frame_index })?;
        let variables = frame.variables.iter().map(|(name, value)| Variable { name: name.clone(), value: value.clone() }).collect();
        Ok(ControlMessage::VariablesResponse { activity_id: activity, frame_index, variables })
    }

    /// Applies a client request; returns the response, if the request has one.
    pub fn handle(&self, msg: &ControlMessage) -> Result<Option<ControlMessage>, DebugError> {
        match msg {
            ControlMessage::BreakpointUpdate { breakpoint } => self.update_breakpoint(breakpoint).map(|_| None),
            ControlMessage::Step { activity_id, step } => self.step(*activity_id, step).map(|_| None),
            ControlMessage::StackTraceRequest { activity_id } => self.stack_trace(*activity_id).map(Some),
            ControlMessage::VariablesRequest { activity_id, frame_index } => {
                self.variables(*activity_id, *frame_index).map(Some)
            }
            other => Err(DebugError::UnexpectedMessage(other.kind())),
        }
    }

    /// Called by the runtime at every hook. Blocks while the activity is
    /// suspended. `snapshot` is only invoked when suspending.
    pub fn hook(&self, act: &ActivityDebug, p: &HookPoint, snapshot: &mut dyn FnMut() -> Snapshot) -> Resume {
        if self.is_terminated() {
            return Resume::Terminate;
        }
        if !p.forced && !self.armed.load(Ordering::SeqCst) {
            return Resume::Continue;
        }
        let mut fire = p.forced;
        {
            let bps = self.breakpoints.read().unwrap();
            if !bps.is_empty() {
                fire |= p.phases.iter().any(|(phase, site)| bps.contains(&(*phase, *site)));
            }
        }
        let mut consumed = false;
        {
            let mut flags = self.flags.lock().unwrap();
            if !flags.is_empty() {
                for (phase, _) in p.phases {
                    for key in p.keys {
                        consumed |= flags.remove(&(*phase, *key));
                    }
                }
            }
        }
        {
            let mut st = act.state.lock().unwrap();
            if st.request.is_some_and(|r| r.completes_at(p)) {
                st.request = None;
                consumed = true;
            }
        }
        if consumed {
            self.rearm();
        }
        if !(fire || consumed) {
            return Resume::Continue;
        }
        self.suspend(act, p, snapshot())
    }

    fn suspend(&self, act: &ActivityDebug, p: &HookPoint, frames: Snapshot) -> Resume {
        self.trace.flush();
        self.emit_symbols();
        {
            let mut st = act.state.lock().unwrap();
            st.resume = None;
            st.suspended = Some(Suspension {
                location: p.location,
                depth: p.depth,
                keys: p.keys.to_vec(),
                scopes: p.scopes.to_vec(),
                turn_promise: p.turn_promise,
                monitor_lock: p.monitor_lock,
                frames,
            });
        }
        self.send(ControlMessage::Stopped {
            activity_id: act.id,
            activity_type: act.label.to_string(),
            location: to_location(p.location, self.file_symbol),
            scopes: p
                .scopes
                .iter()
                .map(|s| ActiveScope { scope_type: s.label.to_string(), scope_id: s.id })
                .collect(),
        });
        let mut st = act.state.lock().unwrap();
        loop {
            if self.is_terminated() {
                st.suspended = None;
                return Resume::Terminate;
            }
            if let Some(resume) = st.resume.take() {
                st.suspended = None;
                return resume;
            }
            st = act.cv.wait_timeout(st, Duration::from_millis(100)).unwrap().0;
        }
    }
}

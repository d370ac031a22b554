//! Multi-model runtime: one OS thread per activity, actors as event loops,
//! rendezvous channels, lazy write-back STM, FIFO locks, condition
//! variables and promises. Every tagged point calls into the debugger.

mod interp;
pub mod value;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use polydbg_protocol::catalog::shipped;
use polydbg_protocol::{ControlMessage, MetaDataCatalog, TraceEvent};

use crate::debug::Debugger;
use crate::minilang::ast::{ActivityKind, FnDecl, Program, Span};
use crate::minilang::tags::to_location;
use interp::Interp;
use value::{ActivityHandle, ActorObj, Message, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct RuntimeError {
    pub span: Span,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    /// Also write `print` output to stdout.
    pub echo: bool,
    /// Suspend main before its first statement.
    pub pause_on_entry: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    /// 0 on success or stop, 1 if any activity failed.
    pub status: i32,
    pub output: Vec<String>,
    pub errors: Vec<String>,
}

/// Marker bytes the runtime emits, resolved once from the catalog.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Markers {
    creation: [u8; 4],
    completion: [u8; 4],
    lock: u8,
    condition: u8,
    channel: u8,
    promise: u8,
    monitor: (u8, u8),
    turn: (u8, u8),
    transaction: (u8, u8),
    actor_send: u8,
    promise_resolve: u8,
    channel_send: u8,
    lock_acquire: u8,
    condition_signal: u8,
    channel_receive: u8,
    join: [u8; 4],
    lock_release: u8,
    condition_wait: u8,
}

fn kind_index(kind: ActivityKind) -> usize {
    match kind {
        ActivityKind::Thread => 0,
        ActivityKind::Actor => 1,
        ActivityKind::Process => 2,
        ActivityKind::Task => 3,
    }
}

impl Markers {
    /// Panics if the catalog lacks one of the runtime's concepts.
    fn from_catalog(c: &MetaDataCatalog) -> Self {
        let act = |l: &str| c.activity_type(l).unwrap_or_else(|| panic!("catalog lacks activity type {l}"));
        let passive = |l: &str| c.passive_entity_type(l).expect("passive entity type").creation_marker;
        let scope = |l: &str| {
            let s = c.scope_type(l).expect("scope type");
            (s.start_marker, s.end_marker)
        };
        let send = |l: &str| c.send_op(l).expect("send op").marker;
        let recv = |l: &str| c.receive_op(l).expect("receive op").marker;
        let kinds = [shipped::THREAD, shipped::ACTOR, shipped::PROCESS, shipped::TASK];
        Self {
            creation: kinds.map(|k| act(k).creation_marker),
            completion: kinds.map(|k| act(k).completion_marker),
            lock: passive(shipped::LOCK),
            condition: passive(shipped::CONDITION),
            channel: passive(shipped::CHANNEL),
            promise: passive(shipped::PROMISE),
            monitor: scope(shipped::MONITOR),
            turn: scope(shipped::TURN),
            transaction: scope(shipped::TRANSACTION),
            actor_send: send(shipped::ACTOR_MESSAGE_SEND),
            promise_resolve: send(shipped::PROMISE_RESOLVE),
            channel_send: send(shipped::CHANNEL_SEND),
            lock_acquire: send(shipped::LOCK_ACQUIRE),
            condition_signal: send(shipped::CONDITION_SIGNAL),
            channel_receive: recv(shipped::CHANNEL_RECEIVE),
            // Actors are not joinable; the slot is never used.
            join: [
                recv(shipped::THREAD_JOIN),
                0,
                recv(shipped::PROCESS_JOIN),
                recv(shipped::TASK_JOIN),
            ],
            lock_release: recv(shipped::LOCK_RELEASE),
            condition_wait: recv(shipped::CONDITION_WAIT),
        }
    }
}

#[derive(Debug, Default)]
struct Live {
    /// Running threads, processes and tasks (including main).
    non_actor: usize,
    /// Messages enqueued whose turn has not finished.
    pending: usize,
    /// All OS threads backing activities.
    threads: usize,
    finished: bool,
}

pub struct Runtime {
    functions: HashMap<String, Arc<FnDecl>>,
    behaviors: HashMap<String, HashMap<String, Arc<FnDecl>>>,
    program: Arc<Program>,
    globals: Mutex<Vec<(String, Value)>>,
    debugger: Arc<Debugger>,
    markers: Markers,
    ids: AtomicU64,
    live: Mutex<Live>,
    live_cv: Condvar,
    actors: Mutex<Vec<Arc<ActorObj>>>,
    stm_latch: Mutex<()>,
    output: Mutex<Vec<String>>,
    errors: Mutex<Vec<String>>,
    config: RunConfig,
}

impl Runtime {
    pub fn new(program: Arc<Program>, debugger: Arc<Debugger>, config: RunConfig) -> Arc<Self> {
        let mut functions = HashMap::new();
        let mut behaviors: HashMap<String, HashMap<String, Arc<FnDecl>>> = HashMap::new();
        for f in &program.functions {
            match &f.behavior {
                None => {
                    functions.insert(f.name.clone(), f.clone());
                }
                Some(b) => {
                    behaviors.entry(b.clone()).or_default().insert(f.name.clone(), f.clone());
                }
            }
        }
        Arc::new(Self {
            functions,
            behaviors,
            markers: Markers::from_catalog(debugger.catalog()),
            program,
            globals: Mutex::new(Vec::new()),
            debugger,
            ids: AtomicU64::new(1),
            live: Mutex::default(),
            live_cv: Condvar::new(),
            actors: Mutex::new(Vec::new()),
            stm_latch: Mutex::new(()),
            output: Mutex::new(Vec::new()),
            errors: Mutex::new(Vec::new()),
            config,
        })
    }

    pub(crate) fn next_id(&self) -> u64 {
        self.ids.fetch_add(1, Ordering::SeqCst)
    }

    /// Runs `main` to completion, then lets actors drain, and reports the
    /// exit status. Sends ProgramExit on the debugger's output.
    pub fn run(self: &Arc<Self>) -> RunOutcome {
        let main = self.functions.get("main").cloned().expect("parser guarantees fn main");
        let id = self.next_id();
        let handle = Arc::new(ActivityHandle::new(id, ActivityKind::Thread));
        {
            let mut live = self.live.lock().unwrap();
            live.non_actor += 1;
            live.threads += 1;
        }
        let creation = TraceEvent::ActivityCreation {
            marker: self.markers.creation[0],
            activity_id: id,
            name: self.debugger.symbols().intern("main"),
            location: to_location(main.name_span, self.debugger.file_symbol()),
        };
        self.start_thread(handle, main, Vec::new(), None, Some(creation));

        let flusher = {
            let rt = self.clone();
            thread::spawn(move || loop {
                {
                    let live = rt.live.lock().unwrap();
                    let (live, _) = rt.live_cv.wait_timeout(live, Duration::from_millis(100)).unwrap();
                    if live.threads == 0 {
                        return;
                    }
                }
                rt.debugger.trace().flush();
                rt.debugger.emit_symbols();
            })
        };
        {
            let mut live = self.live.lock().unwrap();
            while live.threads > 0 {
                live = self.live_cv.wait(live).unwrap();
            }
        }
        flusher.join().expect("flusher panicked");
        self.debugger.trace().flush();
        self.debugger.emit_symbols();
        let errors = self.errors.lock().unwrap().clone();
        let status = i32::from(!errors.is_empty());
        self.debugger.send(ControlMessage::ProgramExit { status });
        RunOutcome { status, output: self.output.lock().unwrap().clone(), errors }
    }

    pub(crate) fn print(&self, line: String) {
        if self.config.echo {
            println!("{line}");
        }
        self.output.lock().unwrap().push(line);
    }

    pub(crate) fn fail(&self, activity: u64, err: &RuntimeError) {
        let message = err.to_string();
        self.debugger.report_error(Some(activity), message.clone());
        self.errors.lock().unwrap().push(message);
    }

    /// Starts a thread, process or task. The creator has already emitted
    /// the creation event (except for main, whose event is passed in).
    pub(crate) fn start_thread(
        self: &Arc<Self>,
        handle: Arc<ActivityHandle>,
        func: Arc<FnDecl>,
        args: Vec<Value>,
        creation_site: Option<Span>,
        own_creation: Option<TraceEvent>,
    ) {
        let rt = self.clone();
        thread::Builder::new()
            .name(format!("activity-{}", handle.id))
            .stack_size(32 * 1024 * 1024)
            .spawn(move || {
                let mut it = Interp::new(rt.clone(), handle.id, handle.kind, None);
                if let Some(ev) = own_creation {
                    it.emit(ev);
                }
                let result = it.run_activity(&func, args, creation_site);
                it.emit(TraceEvent::ActivityCompletion { marker: rt.markers.completion[kind_index(handle.kind)] });
                it.close();
                handle.finish(result);
                rt.activity_done(true);
            })
            .expect("spawn activity thread");
    }

    pub(crate) fn start_actor(self: &Arc<Self>, actor: Arc<ActorObj>) {
        self.live.lock().unwrap().threads += 1;
        self.actors.lock().unwrap().push(actor.clone());
        let rt = self.clone();
        thread::Builder::new()
            .name(format!("actor-{}", actor.id))
            .stack_size(32 * 1024 * 1024)
            .spawn(move || {
                let mut it = Interp::new(rt.clone(), actor.id, ActivityKind::Actor, Some(actor.clone()));
                it.event_loop();
                it.emit(TraceEvent::ActivityCompletion { marker: rt.markers.completion[1] });
                it.close();
                rt.activity_done(false);
            })
            .expect("spawn actor thread");
    }

    /// Registers a non-actor about to start; called by the creator so the
    /// count never drops to zero in between.
    pub(crate) fn activity_starting(&self) {
        let mut live = self.live.lock().unwrap();
        live.non_actor += 1;
        live.threads += 1;
    }

    fn activity_done(&self, non_actor: bool) {
        let mut live = self.live.lock().unwrap();
        if non_actor {
            live.non_actor -= 1;
        }
        live.threads -= 1;
        self.update_finished(live);
    }

    /// Enqueues a message unless the actor died; returns whether it did.
    pub(crate) fn enqueue(&self, actor: &ActorObj, msg: Message) -> bool {
        let mut mailbox = actor.mailbox.lock().unwrap();
        if mailbox.dead {
            return false;
        }
        self.live.lock().unwrap().pending += 1;
        mailbox.queue.push_back(msg);
        actor.cv.notify_all();
        true
    }

    pub(crate) fn message_done(&self, count: usize) {
        let mut live = self.live.lock().unwrap();
        live.pending -= count;
        self.update_finished(live);
    }

    fn update_finished(&self, mut live: std::sync::MutexGuard<'_, Live>) {
        if live.non_actor == 0 && live.pending == 0 && !live.finished {
            live.finished = true;
            drop(live);
            for actor in self.actors.lock().unwrap().iter() {
                let _guard = actor.mailbox.lock().unwrap();
                actor.cv.notify_all();
            }
        } else {
            drop(live);
        }
        self.live_cv.notify_all();
    }

    pub(crate) fn finished(&self) -> bool {
        self.live.lock().unwrap().finished
    }
}

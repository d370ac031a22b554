use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::minilang::ast::{ActivityKind, FnDecl, Span};

#[derive(Clone)]
pub enum Value {
    Nil,
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Array(Arc<[Value]>),
    Func(Arc<FnDecl>),
    Behavior(Arc<str>),
    Activity(Arc<ActivityHandle>),
    Actor(Arc<ActorObj>),
    Lock(Arc<LockObj>),
    Cond(Arc<CondObj>),
    Channel(Arc<ChannelObj>),
    Cell(Arc<CellObj>),
    Promise(Arc<PromiseObj>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Nil => "nil",
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::Array(_) => "array",
            Value::Func(_) => "function",
            Value::Behavior(_) => "behavior",
            Value::Activity(_) => "activity",
            Value::Actor(_) => "actor",
            Value::Lock(_) => "lock",
            Value::Cond(_) => "condition",
            Value::Channel(_) => "channel",
            Value::Cell(_) => "cell",
            Value::Promise(_) => "promise",
        }
    }

    /// Like `Display`, but strings are quoted; used for variable views.
    pub fn repr(&self) -> String {
        match self {
            Value::Str(s) => format!("{s:?}"),
            other => other.to_string(),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Nil, Value::Nil) => true,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Array(a), Value::Array(b)) => a == b,
            (Value::Func(a), Value::Func(b)) => Arc::ptr_eq(a, b),
            (Value::Behavior(a), Value::Behavior(b)) => a == b,
            (Value::Activity(a), Value::Activity(b)) => a.id == b.id,
            (Value::Actor(a), Value::Actor(b)) => a.id == b.id,
            (Value::Lock(a), Value::Lock(b)) => a.id == b.id,
            (Value::Cond(a), Value::Cond(b)) => a.id == b.id,
            (Value::Channel(a), Value::Channel(b)) => a.id == b.id,
            (Value::Cell(a), Value::Cell(b)) => a.id == b.id,
            (Value::Promise(a), Value::Promise(b)) => a.id == b.id,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nil => f.write_str("nil"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => f.write_str(s),
            Value::Array(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(&item.repr())?;
                }
                f.write_str("]")
            }
            Value::Func(decl) => write!(f, "fn {}", decl.qualified_name()),
            Value::Behavior(name) => write!(f, "behavior {name}"),
            Value::Activity(h) => write!(f, "{}#{}", h.kind.label(), h.id),
            Value::Actor(a) => write!(f, "Actor#{} {}", a.id, a.behavior),
            Value::Lock(l) => match l.owner() {
                Some(owner) => write!(f, "Lock#{} held by {owner}", l.id),
                None => write!(f, "Lock#{} free", l.id),
            },
            Value::Cond(c) => write!(f, "Condition#{}", c.id),
            Value::Channel(c) => write!(f, "Channel#{}", c.id),
            Value::Cell(c) => write!(f, "Cell#{} = {}", c.id, c.state.lock().unwrap().1.repr()),
            Value::Promise(p) => match &*p.state.lock().unwrap() {
                PromiseState::Unresolved(_) => write!(f, "Promise#{} unresolved", p.id),
                PromiseState::Resolved(v) => write!(f, "Promise#{} resolved {}", p.id, v.repr()),
                PromiseState::Errored(v) => write!(f, "Promise#{} errored {}", p.id, v.repr()),
            },
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.repr())
    }
}

/// Waits on `cv` until `ready` holds or `stop` is set; `None` on stop.
pub fn wait_until<'a, T>(
    mutex: &'a Mutex<T>,
    cv: &Condvar,
    stop: &AtomicBool,
    mut ready: impl FnMut(&mut T) -> bool,
) -> Option<MutexGuard<'a, T>> {
    let mut guard = mutex.lock().unwrap();
    loop {
        if ready(&mut guard) {
            return Some(guard);
        }
        if stop.load(std::sync::atomic::Ordering::SeqCst) {
            return None;
        }
        guard = cv.wait_timeout(guard, Duration::from_millis(50)).unwrap().0;
    }
}

#[derive(Debug)]
pub struct ActivityHandle {
    pub id: u64,
    pub kind: ActivityKind,
    pub result: Mutex<Option<Value>>,
    pub done: Condvar,
}

impl ActivityHandle {
    pub fn new(id: u64, kind: ActivityKind) -> Self {
        Self { id, kind, result: Mutex::new(None), done: Condvar::new() }
    }

    pub fn finish(&self, value: Value) {
        *self.result.lock().unwrap() = Some(value);
        self.done.notify_all();
    }
}

pub enum MessageBody {
    Method { method: String, args: Vec<Value>, promise: Arc<PromiseObj>, site: Span },
    Handler { func: Arc<FnDecl>, value: Value, promise: Arc<PromiseObj> },
}

pub struct Message {
    pub id: u64,
    /// Halt before the first statement of the turn.
    pub forced: bool,
    pub body: MessageBody,
}

pub struct Mailbox {
    pub queue: VecDeque<Message>,
    pub dead: bool,
}

pub struct ActorObj {
    pub id: u64,
    pub behavior: Arc<str>,
    pub mailbox: Mutex<Mailbox>,
    pub cv: Condvar,
    pub fields: Mutex<Vec<(String, Value)>>,
}

impl fmt::Debug for ActorObj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Actor#{}", self.id)
    }
}

impl ActorObj {
    pub fn new(id: u64, behavior: Arc<str>) -> Self {
        Self {
            id,
            behavior,
            mailbox: Mutex::new(Mailbox { queue: VecDeque::new(), dead: false }),
            cv: Condvar::new(),
            fields: Mutex::new(Vec::new()),
        }
    }

    pub fn field(&self, name: &str) -> Value {
        let fields = self.fields.lock().unwrap();
        fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone()).unwrap_or(Value::Nil)
    }

    pub fn set_field(&self, name: &str, value: Value) {
        let mut fields = self.fields.lock().unwrap();
        match fields.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => fields.push((name.to_string(), value)),
        }
    }
}

#[derive(Debug, Default)]
pub struct LockState {
    pub owner: Option<u64>,
    pub queue: VecDeque<u64>,
}

/// Non-reentrant lock granting ownership in arrival order.
#[derive(Debug)]
pub struct LockObj {
    pub id: u64,
    pub state: Mutex<LockState>,
    pub cv: Condvar,
}

impl LockObj {
    pub fn new(id: u64) -> Self {
        Self { id, state: Mutex::default(), cv: Condvar::new() }
    }

    pub fn owner(&self) -> Option<u64> {
        self.state.lock().unwrap().owner
    }
}

#[derive(Debug, Default)]
pub struct CondState {
    pub waiters: VecDeque<u64>,
    pub signaled: HashSet<u64>,
}

#[derive(Debug)]
pub struct CondObj {
    pub id: u64,
    pub state: Mutex<CondState>,
    pub cv: Condvar,
}

impl CondObj {
    pub fn new(id: u64) -> Self {
        Self { id, state: Mutex::default(), cv: Condvar::new() }
    }
}

#[derive(Debug)]
pub struct Offer {
    pub ticket: u64,
    pub sender: u64,
    pub site: Span,
    pub value: Value,
}

#[derive(Debug, Default)]
pub struct ChanState {
    pub offers: VecDeque<Offer>,
    /// Ticket -> (receiver, receiver's site), for senders to pick up.
    pub taken: HashMap<u64, (u64, Span)>,
    pub next_ticket: u64,
}

/// Unbuffered channel; a send completes only together with a receive.
#[derive(Debug)]
pub struct ChannelObj {
    pub id: u64,
    pub state: Mutex<ChanState>,
    pub cv: Condvar,
}

impl ChannelObj {
    pub fn new(id: u64) -> Self {
        Self { id, state: Mutex::default(), cv: Condvar::new() }
    }
}

/// Transactional cell: (version, value).
#[derive(Debug)]
pub struct CellObj {
    pub id: u64,
    pub state: Mutex<(u64, Value)>,
}

impl CellObj {
    pub fn new(id: u64, value: Value) -> Self {
        Self { id, state: Mutex::new((0, value)) }
    }
}

pub enum PromiseState {
    Unresolved(Vec<(Arc<FnDecl>, Arc<ActorObj>)>),
    Resolved(Value),
    Errored(Value),
}

pub struct PromiseObj {
    pub id: u64,
    /// The PromiseCreation-tagged site that made it.
    pub site: Span,
    pub state: Mutex<PromiseState>,
}

impl fmt::Debug for PromiseObj {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Promise#{}", self.id)
    }
}

impl PromiseObj {
    pub fn new(id: u64, site: Span) -> Self {
        Self { id, site, state: Mutex::new(PromiseState::Unresolved(Vec::new())) }
    }
}

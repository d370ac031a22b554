//! Tree-walking evaluator for one activity. Each activity owns one
//! `Interp`; shared state lives in [`Runtime`] and the entity objects.

use std::collections::HashMap;
use std::sync::Arc;

use polydbg_protocol::catalog::shipped;
use polydbg_protocol::{SourceLocation, TraceEvent};

use super::value::*;
use super::{kind_index, RuntimeError, Runtime};
use crate::debug::{ActivityBuffer, ActivityDebug, FlagKey, FrameSnapshot, HookPoint, Phase, Resume, ScopeEntry, Snapshot};
use crate::minilang::ast::*;
use crate::minilang::tags::to_location;

const MAX_DEPTH: usize = 2000;

pub(crate) enum Unwind {
    Return(Value),
    Error(RuntimeError),
    Terminate,
}

type Exec<T> = Result<T, Unwind>;

fn fail<T>(span: Span, message: impl Into<String>) -> Exec<T> {
    Err(Unwind::Error(RuntimeError { span, message: message.into() }))
}

fn type_error<T>(span: Span, expected: &str, found: &Value) -> Exec<T> {
    fail(span, format!("expected {expected}, found {}", found.type_name()))
}

struct Frame {
    name: String,
    location: Span,
    env: Vec<Vec<(String, Value)>>,
}

/// Phases and keys merged into the next statement hook, so "before the
/// first statement" halts and the statement itself are one suspension.
struct Entry {
    phases: Vec<(Phase, Span)>,
    keys: Vec<FlagKey>,
    forced: bool,
}

#[derive(Default)]
struct Txn {
    reads: HashMap<u64, (Arc<CellObj>, u64, Value)>,
    writes: HashMap<u64, (Arc<CellObj>, Value)>,
}

pub(crate) struct Interp {
    rt: Arc<Runtime>,
    id: u64,
    dbg: Arc<ActivityDebug>,
    buf: Arc<ActivityBuffer>,
    actor: Option<Arc<ActorObj>>,
    frames: Vec<Frame>,
    scopes: Vec<ScopeEntry>,
    monitor_locks: Vec<u64>,
    txn: Option<Txn>,
    entry: Option<Entry>,
    turn_promise: Option<u64>,
}

impl Interp {
    pub(crate) fn new(rt: Arc<Runtime>, id: u64, kind: ActivityKind, actor: Option<Arc<ActorObj>>) -> Self {
        let dbg = rt.debugger.register(id, kind.label());
        let buf = rt.debugger.trace().register(id);
        Self {
            rt,
            id,
            dbg,
            buf,
            actor,
            frames: Vec::new(),
            scopes: Vec::new(),
            monitor_locks: Vec::new(),
            txn: None,
            entry: None,
            turn_promise: None,
        }
    }

    pub(crate) fn emit(&self, event: TraceEvent) {
        self.buf.emit(&event);
    }

    pub(crate) fn close(&self) {
        self.buf.close();
        self.rt.debugger.forget(self.id);
    }

    fn loc(&self, span: Span) -> SourceLocation {
        to_location(span, self.rt.debugger.file_symbol())
    }

    fn stopping(&self) -> bool {
        self.rt.debugger.is_terminated()
    }

    fn report(&self, result: Exec<Value>) -> Value {
        match result {
            Ok(v) | Err(Unwind::Return(v)) => v,
            Err(Unwind::Error(e)) => {
                self.rt.fail(self.id, &e);
                Value::Nil
            }
            Err(Unwind::Terminate) => Value::Nil,
        }
    }

    /// Body of a thread, process or task. Main (no creation site) first
    /// initializes the globals.
    pub(crate) fn run_activity(&mut self, func: &Arc<FnDecl>, args: Vec<Value>, creation_site: Option<Span>) -> Value {
        if creation_site.is_none() {
            if let Err(e) = self.init_globals() {
                return self.report(Err(e));
            }
        }
        self.entry = match creation_site {
            Some(site) => Some(Entry {
                phases: vec![(Phase::ActivityExecution, site)],
                keys: vec![FlagKey::Child(self.id)],
                forced: false,
            }),
            None => Some(Entry { phases: Vec::new(), keys: Vec::new(), forced: self.rt.config.pause_on_entry }),
        };
        let result = self.call(func, args, func.name_span);
        self.report(result)
    }

    fn init_globals(&mut self) -> Exec<()> {
        let program = self.rt.program.clone();
        self.frames.push(Frame { name: "<globals>".into(), location: Span::default(), env: vec![Vec::new()] });
        for g in &program.globals {
            let v = self.eval(&g.value)?;
            let mut globals = self.rt.globals.lock().unwrap();
            match globals.iter_mut().find(|(n, _)| *n == g.name) {
                Some(slot) => slot.1 = v,
                None => globals.push((g.name.clone(), v)),
            }
        }
        self.frames.pop();
        Ok(())
    }

    // ---- debugger plumbing ----

    fn hook(&self, phases: &[(Phase, Span)], location: Span, keys: &[FlagKey], forced: bool) -> Exec<()> {
        let point = HookPoint {
            phases,
            location,
            keys,
            depth: self.frames.len(),
            scopes: &self.scopes,
            turn_promise: self.turn_promise,
            monitor_lock: self.monitor_locks.last().copied(),
            forced,
        };
        match self.rt.debugger.hook(&self.dbg, &point, &mut || self.snapshot()) {
            Resume::Continue => Ok(()),
            Resume::Terminate => Err(Unwind::Terminate),
        }
    }

    fn at(&self, phase: Phase, site: Span, location: Span, keys: &[FlagKey]) -> Exec<()> {
        self.hook(&[(phase, site)], location, keys, false)
    }

    fn stmt_hook(&mut self, span: Span) -> Exec<()> {
        if let Some(frame) = self.frames.last_mut() {
            frame.location = span;
        }
        match self.entry.take() {
            None => self.hook(&[(Phase::Statement, span)], span, &[], false),
            Some(entry) => {
                let mut phases = vec![(Phase::Statement, span)];
                phases.extend(entry.phases);
                self.hook(&phases, span, &entry.keys, entry.forced)
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        let mut out: Snapshot = self
            .frames
            .iter()
            .rev()
            .map(|frame| {
                let mut vars: Vec<(String, String)> = Vec::new();
                for scope in &frame.env {
                    for (name, value) in scope {
                        match vars.iter_mut().find(|(n, _)| n == name) {
                            Some(slot) => slot.1 = value.repr(),
                            None => vars.push((name.clone(), value.repr())),
                        }
                    }
                }
                FrameSnapshot { name: frame.name.clone(), location: frame.location, variables: vars }
            })
            .collect();
        if let (Some(actor), Some(top)) = (&self.actor, out.first_mut()) {
            for (name, value) in actor.fields.lock().unwrap().iter() {
                top.variables.push((format!("self.{name}"), value.repr()));
            }
        }
        out
    }

    fn push_scope(&mut self, label: &'static str, id: u64, marker: u8, location: Span) {
        self.emit(TraceEvent::ScopeStart { marker, scope_id: id, location: self.loc(location) });
        self.scopes.push(ScopeEntry { label, id });
    }

    fn pop_scope(&mut self, marker: u8) {
        self.scopes.pop();
        self.emit(TraceEvent::ScopeEnd { marker });
    }

    // ---- environment ----

    fn define(&mut self, name: &str, value: Value) {
        let scope = self.frames.last_mut().and_then(|f| f.env.last_mut()).expect("a frame is active");
        match scope.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => scope.push((name.to_string(), value)),
        }
    }

    fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(frame) = self.frames.last() {
            for scope in frame.env.iter().rev() {
                if let Some((_, v)) = scope.iter().rev().find(|(n, _)| n == name) {
                    return Some(v.clone());
                }
            }
        }
        if let Some((_, v)) = self.rt.globals.lock().unwrap().iter().find(|(n, _)| n == name) {
            return Some(v.clone());
        }
        if let Some(f) = self.rt.functions.get(name) {
            return Some(Value::Func(f.clone()));
        }
        self.rt.behaviors.contains_key(name).then(|| Value::Behavior(Arc::from(name)))
    }

    fn assign(&mut self, name: &str, value: Value, span: Span) -> Exec<()> {
        if let Some(frame) = self.frames.last_mut() {
            for scope in frame.env.iter_mut().rev() {
                if let Some(slot) = scope.iter_mut().rev().find(|(n, _)| n == name) {
                    slot.1 = value;
                    return Ok(());
                }
            }
        }
        let mut globals = self.rt.globals.lock().unwrap();
        match globals.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => {
                slot.1 = value;
                Ok(())
            }
            None => fail(span, format!("assignment to undeclared variable `{name}`")),
        }
    }

    // ---- statements ----

    fn call(&mut self, func: &Arc<FnDecl>, args: Vec<Value>, span: Span) -> Exec<Value> {
        self.call_then(func, args, span, |_, v| Ok(v))
    }

    /// Calls `func` and runs `exit` on its result while its frame is still
    /// on the stack.
    fn call_then(
        &mut self,
        func: &Arc<FnDecl>,
        args: Vec<Value>,
        span: Span,
        exit: impl FnOnce(&mut Self, Value) -> Exec<Value>,
    ) -> Exec<Value> {
        if args.len() != func.params.len() {
            return fail(
                span,
                format!("`{}` expects {} argument(s), got {}", func.qualified_name(), func.params.len(), args.len()),
            );
        }
        if self.frames.len() >= MAX_DEPTH {
            return fail(span, "call stack overflow");
        }
        let env = func.params.iter().cloned().zip(args).collect();
        self.frames.push(Frame { name: func.qualified_name(), location: func.name_span, env: vec![env] });
        let result = if func.body.stmts.is_empty() && self.entry.is_some() {
            let entry = self.entry.take().expect("checked");
            self.hook(&entry.phases, func.body.close, &entry.keys, entry.forced)
        } else {
            self.exec_stmts(&func.body.stmts)
        };
        let result = match result {
            Ok(()) => exit(self, Value::Nil),
            Err(Unwind::Return(v)) => exit(self, v),
            Err(e) => Err(e),
        };
        self.frames.pop();
        result
    }

    fn exec_stmts(&mut self, stmts: &[Stmt]) -> Exec<()> {
        for stmt in stmts {
            self.exec(stmt)?;
        }
        Ok(())
    }

    fn exec_block(&mut self, block: &Block) -> Exec<()> {
        self.frames.last_mut().expect("a frame is active").env.push(Vec::new());
        let result = self.exec_stmts(&block.stmts);
        self.frames.last_mut().expect("a frame is active").env.pop();
        result
    }

    fn cond(&mut self, expr: &Expr) -> Exec<bool> {
        match self.eval(expr)? {
            Value::Bool(b) => Ok(b),
            other => type_error(expr.span, "bool", &other),
        }
    }

    fn exec(&mut self, stmt: &Stmt) -> Exec<()> {
        self.stmt_hook(stmt.span)?;
        match &stmt.kind {
            StmtKind::Let { name, value } => {
                let v = self.eval(value)?;
                self.define(name, v);
            }
            StmtKind::Assign { target: AssignTarget::Var(name), value } => {
                let v = self.eval(value)?;
                self.assign(name, v, stmt.span)?;
            }
            StmtKind::Assign { target: AssignTarget::Field(name), value } => {
                let v = self.eval(value)?;
                match &self.actor {
                    Some(actor) => actor.set_field(name, v),
                    None => return fail(stmt.span, "`self` used outside an actor"),
                }
            }
            StmtKind::If { cond, then, otherwise } => {
                if self.cond(cond)? {
                    self.exec_block(then)?;
                } else if let Some(block) = otherwise {
                    self.exec_block(block)?;
                }
            }
            StmtKind::While { cond, body } => {
                while self.cond(cond)? {
                    if self.stopping() {
                        return Err(Unwind::Terminate);
                    }
                    self.exec_block(body)?;
                }
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e)?,
                    None => Value::Nil,
                };
                return Err(Unwind::Return(v));
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::Atomic { keyword, body } => self.atomic(*keyword, body)?,
            StmtKind::Monitor { keyword, lock, body } => {
                let lock = match self.eval(lock)? {
                    Value::Lock(l) => l,
                    other => return type_error(lock.span, "lock", &other),
                };
                self.monitor(*keyword, &lock, body)?;
            }
        }
        Ok(())
    }

    fn atomic(&mut self, keyword: Span, body: &Block) -> Exec<()> {
        if self.txn.is_some() {
            return fail(keyword, "nested atomic blocks are not supported");
        }
        let (start, end) = self.rt.markers.transaction;
        let keys = [];
        self.at(Phase::BeforeTransaction, keyword, keyword, &keys)?;
        loop {
            let scope_id = self.rt.next_id();
            self.push_scope(shipped::TRANSACTION, scope_id, start, keyword);
            self.txn = Some(Txn::default());
            let result = self.exec_block(body);
            let result = match result {
                Ok(()) | Err(Unwind::Return(_)) => {
                    self.at(Phase::BeforeCommit, keyword, body.close, &keys).and(Ok(result))
                }
                Err(e) => Err(e),
            };
            let txn = self.txn.take().expect("transaction is open");
            let result = match result {
                Ok(inner) => inner,
                Err(e) => {
                    self.pop_scope(end);
                    return Err(e);
                }
            };
            let committed = self.commit(txn);
            self.pop_scope(end);
            if committed {
                self.at(Phase::AfterCommit, keyword, body.close, &keys)?;
                return result;
            }
        }
    }

    fn commit(&self, txn: Txn) -> bool {
        let _latch = self.rt.stm_latch.lock().unwrap();
        let valid = txn.reads.values().all(|(cell, version, _)| cell.state.lock().unwrap().0 == *version);
        if valid {
            for (cell, value) in txn.writes.into_values() {
                let mut st = cell.state.lock().unwrap();
                st.0 += 1;
                st.1 = value;
            }
        }
        valid
    }

    fn monitor(&mut self, keyword: Span, lock: &Arc<LockObj>, body: &Block) -> Exec<()> {
        let keys = [FlagKey::Lock(lock.id)];
        let (start, end) = self.rt.markers.monitor;
        self.at(Phase::BeforeAcquire, keyword, keyword, &keys)?;
        self.acquire_raw(lock, keyword)?;
        let scope_id = self.rt.next_id();
        self.push_scope(shipped::MONITOR, scope_id, start, keyword);
        self.monitor_locks.push(lock.id);
        let mut result = self.at(Phase::AfterAcquire, keyword, keyword, &keys);
        if result.is_ok() {
            result = self.exec_block(body);
        }
        match result {
            Ok(()) | Err(Unwind::Return(_)) => {
                self.at(Phase::BeforeRelease, body.close, body.close, &keys)?;
                self.monitor_locks.pop();
                self.pop_scope(end);
                self.release_raw(lock);
                self.at(Phase::AfterRelease, body.close, body.close, &keys)?;
                result
            }
            Err(Unwind::Error(e)) => {
                self.monitor_locks.pop();
                self.pop_scope(end);
                self.release_raw(lock);
                Err(Unwind::Error(e))
            }
            Err(e) => Err(e),
        }
    }

    fn acquire_raw(&self, lock: &LockObj, span: Span) -> Exec<()> {
        {
            let mut st = lock.state.lock().unwrap();
            if st.owner == Some(self.id) {
                return fail(span, "lock is already held by this activity");
            }
            st.queue.push_back(self.id);
        }
        let me = self.id;
        let granted = wait_until(&lock.state, &lock.cv, self.rt.debugger.stop_flag(), |s| {
            s.owner.is_none() && s.queue.front() == Some(&me)
        });
        match granted {
            Some(mut st) => {
                st.queue.pop_front();
                st.owner = Some(me);
            }
            None => {
                lock.state.lock().unwrap().queue.retain(|a| *a != me);
                lock.cv.notify_all();
                return Err(Unwind::Terminate);
            }
        }
        self.emit(TraceEvent::SendOperation {
            marker: self.rt.markers.lock_acquire,
            entity_id: lock.id,
            target_id: lock.id,
        });
        Ok(())
    }

    fn release_raw(&self, lock: &LockObj) {
        lock.state.lock().unwrap().owner = None;
        lock.cv.notify_all();
        self.emit(TraceEvent::ReceiveOperation { marker: self.rt.markers.lock_release, source_id: lock.id });
    }

    fn check_owner(&self, lock: &LockObj, span: Span, what: &str) -> Exec<()> {
        if lock.owner() != Some(self.id) {
            return fail(span, format!("{what} requires holding Lock#{}", lock.id));
        }
        Ok(())
    }

    // ---- expressions ----

    fn eval_all(&mut self, exprs: &[Expr]) -> Exec<Vec<Value>> {
        exprs.iter().map(|e| self.eval(e)).collect()
    }

    fn eval(&mut self, expr: &Expr) -> Exec<Value> {
        let span = expr.span;
        match &expr.kind {
            ExprKind::Int(i) => Ok(Value::Int(*i)),
            ExprKind::Str(s) => Ok(Value::Str(Arc::from(s.as_str()))),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Nil => Ok(Value::Nil),
            ExprKind::SelfRef => match &self.actor {
                Some(a) => Ok(Value::Actor(a.clone())),
                None => fail(span, "`self` used outside an actor"),
            },
            ExprKind::Array(items) => Ok(Value::Array(Arc::from(self.eval_all(items)?))),
            ExprKind::Var(name) => match self.lookup(name) {
                Some(v) => Ok(v),
                None => fail(span, format!("undefined variable `{name}`")),
            },
            ExprKind::Field(name) => match &self.actor {
                Some(a) => Ok(a.field(name)),
                None => fail(span, "`self` used outside an actor"),
            },
            ExprKind::Index { target, index } => {
                let t = self.eval(target)?;
                let i = self.eval(index)?;
                match (t, i) {
                    (Value::Array(items), Value::Int(i)) => match usize::try_from(i).ok().and_then(|i| items.get(i)) {
                        Some(v) => Ok(v.clone()),
                        None => fail(index.span, format!("index {i} out of bounds for length {}", items.len())),
                    },
                    (Value::Array(_), other) => type_error(index.span, "int", &other),
                    (other, _) => type_error(target.span, "array", &other),
                }
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match (op, v) {
                    (UnOp::Neg, Value::Int(i)) => match i.checked_neg() {
                        Some(n) => Ok(Value::Int(n)),
                        None => fail(span, "integer overflow"),
                    },
                    (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (UnOp::Neg, other) => type_error(operand.span, "int", &other),
                    (UnOp::Not, other) => type_error(operand.span, "bool", &other),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs),
            ExprKind::Call { callee, callee_span, args } => {
                let func = match self.lookup(callee) {
                    Some(Value::Func(f)) => f,
                    Some(other) => return type_error(*callee_span, "function", &other),
                    None => return fail(*callee_span, format!("unknown function `{callee}`")),
                };
                let args = self.eval_all(args)?;
                self.call(&func, args, *callee_span)
            }
            ExprKind::Builtin { op, keyword, args } => self.builtin(*op, *keyword, args),
            ExprKind::Method { receiver, method, name_span, args } => {
                let target = self.eval(receiver)?;
                let args = self.eval_all(args)?;
                self.method(target, *method, *name_span, args, receiver.span)
            }
            ExprKind::Send { target, method, arrow, args } => {
                let target = match self.eval(target)? {
                    Value::Actor(a) => a,
                    other => return type_error(target.span, "actor", &other),
                };
                let args = self.eval_all(args)?;
                self.send(&target, method, *arrow, args)
            }
        }
    }

    fn binary(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr) -> Exec<Value> {
        if matches!(op, BinOp::And | BinOp::Or) {
            let l = self.cond(lhs)?;
            if (op == BinOp::And && !l) || (op == BinOp::Or && l) {
                return Ok(Value::Bool(l));
            }
            return Ok(Value::Bool(self.cond(rhs)?));
        }
        let l = self.eval(lhs)?;
        let r = self.eval(rhs)?;
        let span = lhs.span;
        let overflow = |v: Option<i64>| match v {
            Some(v) => Ok(Value::Int(v)),
            None => fail(span, "integer overflow"),
        };
        match (op, &l, &r) {
            (BinOp::Eq, _, _) => Ok(Value::Bool(l == r)),
            (BinOp::Ne, _, _) => Ok(Value::Bool(l != r)),
            (BinOp::Add, Value::Int(a), Value::Int(b)) => overflow(a.checked_add(*b)),
            (BinOp::Add, Value::Str(_), _) | (BinOp::Add, _, Value::Str(_)) => {
                Ok(Value::Str(Arc::from(format!("{l}{r}"))))
            }
            (BinOp::Add, Value::Array(a), Value::Array(b)) => {
                Ok(Value::Array(a.iter().chain(b.iter()).cloned().collect()))
            }
            (BinOp::Sub, Value::Int(a), Value::Int(b)) => overflow(a.checked_sub(*b)),
            (BinOp::Mul, Value::Int(a), Value::Int(b)) => overflow(a.checked_mul(*b)),
            (BinOp::Div | BinOp::Rem, Value::Int(_), Value::Int(0)) => fail(rhs.span, "division by zero"),
            (BinOp::Div, Value::Int(a), Value::Int(b)) => overflow(a.checked_div(*b)),
            (BinOp::Rem, Value::Int(a), Value::Int(b)) => overflow(a.checked_rem(*b)),
            (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge, Value::Int(a), Value::Int(b)) => {
                Ok(Value::Bool(compare(op, a.cmp(b))))
            }
            (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge, Value::Str(a), Value::Str(b)) => {
                Ok(Value::Bool(compare(op, a.cmp(b))))
            }
            _ => fail(
                span,
                format!("unsupported operand types for {op:?}: {} and {}", l.type_name(), r.type_name()),
            ),
        }
    }

    fn builtin(&mut self, op: Builtin, kw: Span, args: &[Expr]) -> Exec<Value> {
        let values = self.eval_all(args)?;
        let arg_span = |i: usize| args.get(i).map_or(kw, |a| a.span);
        let m = self.rt.markers;
        match op {
            Builtin::Spawn(ActivityKind::Actor) => {
                let behavior = match &values[0] {
                    Value::Behavior(b) => b.clone(),
                    other => return type_error(arg_span(0), "behavior name", other),
                };
                let child = self.rt.next_id();
                self.at(Phase::ActivityCreation, kw, kw, &[FlagKey::Child(child)])?;
                self.emit(TraceEvent::ActivityCreation {
                    marker: m.creation[1],
                    activity_id: child,
                    name: self.rt.debugger.symbols().intern(&behavior),
                    location: self.loc(kw),
                });
                let actor = Arc::new(ActorObj::new(child, behavior));
                self.rt.start_actor(actor.clone());
                Ok(Value::Actor(actor))
            }
            Builtin::Spawn(kind) => {
                let mut values = values.into_iter();
                let func = match values.next() {
                    Some(Value::Func(f)) => f,
                    Some(other) => return type_error(arg_span(0), "function", &other),
                    None => unreachable!("arity checked by the parser"),
                };
                let rest: Vec<Value> = values.collect();
                if rest.len() != func.params.len() {
                    return fail(
                        kw,
                        format!("`{}` expects {} argument(s), got {}", func.name, func.params.len(), rest.len()),
                    );
                }
                let child = self.rt.next_id();
                self.at(Phase::ActivityCreation, kw, kw, &[FlagKey::Child(child)])?;
                self.emit(TraceEvent::ActivityCreation {
                    marker: m.creation[kind_index(kind)],
                    activity_id: child,
                    name: self.rt.debugger.symbols().intern(&func.name),
                    location: self.loc(kw),
                });
                let handle = Arc::new(ActivityHandle::new(child, kind));
                self.rt.activity_starting();
                self.rt.start_thread(handle.clone(), func, rest, Some(kw), None);
                Ok(Value::Activity(handle))
            }
            Builtin::Join => {
                let handle = match &values[0] {
                    Value::Activity(h) => h.clone(),
                    Value::Actor(_) => return fail(arg_span(0), "actors cannot be joined"),
                    other => return type_error(arg_span(0), "activity", other),
                };
                if handle.id == self.id {
                    return fail(kw, "an activity cannot join itself");
                }
                let keys = [FlagKey::Joined(handle.id)];
                self.at(Phase::BeforeJoin, kw, kw, &keys)?;
                let result = wait_until(&handle.result, &handle.done, self.rt.debugger.stop_flag(), |r| r.is_some())
                    .ok_or(Unwind::Terminate)?
                    .clone()
                    .expect("ready");
                self.emit(TraceEvent::ReceiveOperation { marker: m.join[kind_index(handle.kind)], source_id: handle.id });
                self.at(Phase::AfterJoin, kw, kw, &keys)?;
                Ok(result)
            }
            Builtin::Acquire => {
                let lock = expect_lock(&values[0], arg_span(0))?;
                let keys = [FlagKey::Lock(lock.id)];
                self.at(Phase::BeforeAcquire, kw, kw, &keys)?;
                self.acquire_raw(&lock, kw)?;
                self.at(Phase::AfterAcquire, kw, kw, &keys)?;
                Ok(Value::Nil)
            }
            Builtin::Release => {
                let lock = expect_lock(&values[0], arg_span(0))?;
                self.check_owner(&lock, kw, "release")?;
                let keys = [FlagKey::Lock(lock.id)];
                self.at(Phase::BeforeRelease, kw, kw, &keys)?;
                self.release_raw(&lock);
                self.at(Phase::AfterRelease, kw, kw, &keys)?;
                Ok(Value::Nil)
            }
            Builtin::Wait => {
                let cond = expect_cond(&values[0], arg_span(0))?;
                let lock = expect_lock(&values[1], arg_span(1))?;
                self.check_owner(&lock, kw, "wait")?;
                cond.state.lock().unwrap().waiters.push_back(self.id);
                lock.state.lock().unwrap().owner = None;
                lock.cv.notify_all();
                let me = self.id;
                drop(
                    wait_until(&cond.state, &cond.cv, self.rt.debugger.stop_flag(), |s| s.signaled.remove(&me))
                        .ok_or(Unwind::Terminate)?,
                );
                {
                    lock.state.lock().unwrap().queue.push_back(me);
                }
                let granted = wait_until(&lock.state, &lock.cv, self.rt.debugger.stop_flag(), |s| {
                    s.owner.is_none() && s.queue.front() == Some(&me)
                });
                let mut st = granted.ok_or(Unwind::Terminate)?;
                st.queue.pop_front();
                st.owner = Some(me);
                drop(st);
                self.emit(TraceEvent::ReceiveOperation { marker: m.condition_wait, source_id: cond.id });
                Ok(Value::Nil)
            }
            Builtin::Signal => {
                let cond = expect_cond(&values[0], arg_span(0))?;
                let lock = expect_lock(&values[1], arg_span(1))?;
                self.check_owner(&lock, kw, "signal")?;
                {
                    let mut st = cond.state.lock().unwrap();
                    if let Some(waiter) = st.waiters.pop_front() {
                        st.signaled.insert(waiter);
                    }
                }
                cond.cv.notify_all();
                self.emit(TraceEvent::SendOperation {
                    marker: m.condition_signal,
                    entity_id: cond.id,
                    target_id: cond.id,
                });
                Ok(Value::Nil)
            }
            Builtin::WhenResolved => {
                let Some(actor) = self.actor.clone() else {
                    return fail(kw, "whenResolved can only be used inside an actor");
                };
                let promise = expect_promise(&values[0], arg_span(0))?;
                let func = match &values[1] {
                    Value::Func(f) if f.params.len() <= 1 => f.clone(),
                    Value::Func(f) => return fail(arg_span(1), format!("handler `{}` must take at most one argument", f.name)),
                    other => return type_error(arg_span(1), "function", other),
                };
                let settled = {
                    let mut st = promise.state.lock().unwrap();
                    match &mut *st {
                        PromiseState::Unresolved(handlers) => {
                            handlers.push((func.clone(), actor.clone()));
                            None
                        }
                        PromiseState::Resolved(v) | PromiseState::Errored(v) => Some(v.clone()),
                    }
                };
                if let Some(value) = settled {
                    let forced = self.rt.debugger.take_flag(Phase::OnPromiseResolution, FlagKey::Promise(promise.id));
                    self.dispatch_handler(&actor, func, value, promise, forced);
                }
                Ok(Value::Nil)
            }
            Builtin::Resolve => {
                let promise = expect_promise(&values[0], arg_span(0))?;
                self.resolve_promise(&promise, Ok(values[1].clone()), kw, true)?;
                Ok(Value::Nil)
            }
            Builtin::Lock => {
                let id = self.create_passive(m.lock, kw);
                Ok(Value::Lock(Arc::new(LockObj::new(id))))
            }
            Builtin::Cond => {
                let id = self.create_passive(m.condition, kw);
                Ok(Value::Cond(Arc::new(CondObj::new(id))))
            }
            Builtin::Channel => {
                let id = self.create_passive(m.channel, kw);
                Ok(Value::Channel(Arc::new(ChannelObj::new(id))))
            }
            Builtin::Promise => {
                let id = self.create_passive(m.promise, kw);
                Ok(Value::Promise(Arc::new(PromiseObj::new(id, kw))))
            }
            Builtin::Cell => {
                let id = self.rt.next_id();
                Ok(Value::Cell(Arc::new(CellObj::new(id, values[0].clone()))))
            }
            Builtin::Print => {
                let line = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
                self.rt.print(line);
                Ok(Value::Nil)
            }
            Builtin::Len => match &values[0] {
                Value::Array(items) => Ok(Value::Int(items.len() as i64)),
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                other => type_error(arg_span(0), "array or string", other),
            },
        }
    }

    fn create_passive(&self, marker: u8, site: Span) -> u64 {
        let id = self.rt.next_id();
        self.emit(TraceEvent::PassiveEntityCreation { marker, entity_id: id, location: self.loc(site) });
        id
    }

    fn method(&mut self, target: Value, method: MethodKind, site: Span, args: Vec<Value>, recv_span: Span) -> Exec<Value> {
        match (method, target) {
            (MethodKind::ChannelSend, Value::Channel(ch)) => {
                self.channel_send(&ch, args.into_iter().next().expect("arity checked"), site)?;
                Ok(Value::Nil)
            }
            (MethodKind::ChannelReceive, Value::Channel(ch)) => self.channel_receive(&ch, site),
            (MethodKind::CellGet, Value::Cell(cell)) => Ok(self.cell_get(&cell)),
            (MethodKind::CellSet, Value::Cell(cell)) => {
                self.cell_set(&cell, args.into_iter().next().expect("arity checked"));
                Ok(Value::Nil)
            }
            (MethodKind::ChannelSend | MethodKind::ChannelReceive, other) => type_error(recv_span, "channel", &other),
            (MethodKind::CellGet | MethodKind::CellSet, other) => type_error(recv_span, "cell", &other),
        }
    }

    fn cell_get(&mut self, cell: &Arc<CellObj>) -> Value {
        match &mut self.txn {
            Some(txn) => {
                if let Some((_, v)) = txn.writes.get(&cell.id) {
                    return v.clone();
                }
                txn.reads
                    .entry(cell.id)
                    .or_insert_with(|| {
                        let st = cell.state.lock().unwrap();
                        (cell.clone(), st.0, st.1.clone())
                    })
                    .2
                    .clone()
            }
            None => cell.state.lock().unwrap().1.clone(),
        }
    }

    fn cell_set(&mut self, cell: &Arc<CellObj>, value: Value) {
        match &mut self.txn {
            Some(txn) => {
                txn.writes.insert(cell.id, (cell.clone(), value));
            }
            None => {
                let mut st = cell.state.lock().unwrap();
                st.0 += 1;
                st.1 = value;
            }
        }
    }

    fn channel_send(&mut self, ch: &ChannelObj, value: Value, site: Span) -> Exec<()> {
        self.at(Phase::BeforeChannelSend, site, site, &[])?;
        let ticket = {
            let mut st = ch.state.lock().unwrap();
            let ticket = st.next_ticket;
            st.next_ticket += 1;
            st.offers.push_back(Offer { ticket, sender: self.id, site, value });
            ticket
        };
        ch.cv.notify_all();
        let (receiver, receiver_site) = {
            let mut st = wait_until(&ch.state, &ch.cv, self.rt.debugger.stop_flag(), |s| s.taken.contains_key(&ticket))
                .ok_or(Unwind::Terminate)?;
            st.taken.remove(&ticket).expect("ready")
        };
        self.emit(TraceEvent::SendOperation { marker: self.rt.markers.channel_send, entity_id: ch.id, target_id: ch.id });
        self.at(Phase::AfterChannelSend, receiver_site, site, &[FlagKey::ChannelReceiver(receiver)])
    }

    fn channel_receive(&mut self, ch: &ChannelObj, site: Span) -> Exec<Value> {
        self.at(Phase::BeforeChannelReceive, site, site, &[])?;
        let offer = {
            let mut st = wait_until(&ch.state, &ch.cv, self.rt.debugger.stop_flag(), |s| !s.offers.is_empty())
                .ok_or(Unwind::Terminate)?;
            let offer = st.offers.pop_front().expect("ready");
            st.taken.insert(offer.ticket, (self.id, site));
            offer
        };
        ch.cv.notify_all();
        self.emit(TraceEvent::ReceiveOperation { marker: self.rt.markers.channel_receive, source_id: ch.id });
        self.at(Phase::AfterChannelReceive, offer.site, site, &[FlagKey::ChannelSender(offer.sender)])?;
        Ok(offer.value)
    }

    // ---- actors and promises ----

    fn send(&mut self, target: &Arc<ActorObj>, method: &str, arrow: Span, args: Vec<Value>) -> Exec<Value> {
        let m = self.rt.markers;
        let mid = self.rt.next_id();
        let pid = self.rt.next_id();
        self.at(Phase::ActorMessageSend, arrow, arrow, &[FlagKey::Message(mid), FlagKey::Promise(pid)])?;
        let promise = Arc::new(PromiseObj::new(pid, arrow));
        self.emit(TraceEvent::PassiveEntityCreation { marker: m.promise, entity_id: pid, location: self.loc(arrow) });
        let msg = Message {
            id: mid,
            forced: false,
            body: MessageBody::Method { method: method.to_string(), args, promise: promise.clone(), site: arrow },
        };
        if self.rt.enqueue(target, msg) {
            self.emit(TraceEvent::SendOperation { marker: m.actor_send, entity_id: mid, target_id: target.id });
        } else {
            *promise.state.lock().unwrap() = PromiseState::Errored(Value::Str(Arc::from("receiver has terminated")));
        }
        Ok(Value::Promise(promise))
    }

    fn dispatch_handler(&self, actor: &ActorObj, func: Arc<FnDecl>, value: Value, promise: Arc<PromiseObj>, forced: bool) {
        let mid = self.rt.next_id();
        let msg = Message { id: mid, forced, body: MessageBody::Handler { func, value, promise } };
        if self.rt.enqueue(actor, msg) {
            self.emit(TraceEvent::SendOperation { marker: self.rt.markers.actor_send, entity_id: mid, target_id: actor.id });
        }
    }

    /// Settles `promise`. An explicit `resolve` of a settled promise is an
    /// error; the implicit settlement at the end of a turn cannot collide.
    fn resolve_promise(
        &mut self,
        promise: &Arc<PromiseObj>,
        outcome: Result<Value, Value>,
        location: Span,
        explicit: bool,
    ) -> Exec<()> {
        let already = || fail(location, format!("Promise#{} is already resolved", promise.id));
        if !matches!(*promise.state.lock().unwrap(), PromiseState::Unresolved(_)) {
            return if explicit { already() } else { Ok(()) };
        }
        self.at(Phase::BeforePromiseResolution, promise.site, location, &[FlagKey::Promise(promise.id)])?;
        let (value, handlers) = {
            let mut st = promise.state.lock().unwrap();
            let PromiseState::Unresolved(handlers) = &mut *st else {
                return if explicit { already() } else { Ok(()) };
            };
            let handlers = std::mem::take(handlers);
            let value = match outcome {
                Ok(v) => {
                    *st = PromiseState::Resolved(v.clone());
                    v
                }
                Err(v) => {
                    *st = PromiseState::Errored(v.clone());
                    v
                }
            };
            (value, handlers)
        };
        self.emit(TraceEvent::SendOperation {
            marker: self.rt.markers.promise_resolve,
            entity_id: promise.id,
            target_id: promise.id,
        });
        let forced = !handlers.is_empty()
            && self.rt.debugger.take_flag(Phase::OnPromiseResolution, FlagKey::Promise(promise.id));
        for (func, actor) in handlers {
            self.dispatch_handler(&actor, func, value.clone(), promise.clone(), forced);
        }
        Ok(())
    }

    /// Processes messages until the program winds down.
    pub(crate) fn event_loop(&mut self) {
        let actor = self.actor.clone().expect("event loop runs on an actor");
        loop {
            let msg = {
                let mut mailbox = actor.mailbox.lock().unwrap();
                loop {
                    if let Some(m) = mailbox.queue.pop_front() {
                        break Some(m);
                    }
                    if self.rt.finished() || self.stopping() {
                        break None;
                    }
                    mailbox = actor.cv.wait_timeout(mailbox, std::time::Duration::from_millis(50)).unwrap().0;
                }
            };
            let Some(msg) = msg else { break };
            let outcome = self.turn(msg);
            self.rt.message_done(1);
            match outcome {
                Ok(()) => {}
                Err(Unwind::Error(e)) => {
                    self.rt.fail(self.id, &e);
                    let dropped: Vec<Message> = {
                        let mut mailbox = actor.mailbox.lock().unwrap();
                        mailbox.dead = true;
                        mailbox.queue.drain(..).collect()
                    };
                    for msg in &dropped {
                        if let MessageBody::Method { promise, .. } = &msg.body {
                            let mut st = promise.state.lock().unwrap();
                            if matches!(*st, PromiseState::Unresolved(_)) {
                                *st = PromiseState::Errored(Value::Str(Arc::from("receiver has terminated")));
                            }
                        }
                    }
                    self.rt.message_done(dropped.len());
                    break;
                }
                Err(_) => break,
            }
        }
    }

    fn turn(&mut self, msg: Message) -> Exec<()> {
        let actor = self.actor.clone().expect("turns run on actors");
        let (start, end) = self.rt.markers.turn;
        let result = match msg.body {
            MessageBody::Method { method, args, promise, site } => {
                let decl = self.rt.behaviors.get(&*actor.behavior).and_then(|m| m.get(&method)).cloned();
                let location = decl.as_ref().map_or(site, |d| d.name_span);
                self.push_scope(shipped::TURN, msg.id, start, location);
                match decl {
                    None => {
                        let err = format!("{} does not understand `{method}`", actor.behavior);
                        self.resolve_promise(&promise, Err(Value::Str(Arc::from(err))), site, false)
                    }
                    Some(decl) => {
                        self.turn_promise = Some(promise.id);
                        let keys = vec![FlagKey::Message(msg.id), FlagKey::Actor(self.id), FlagKey::Promise(promise.id)];
                        self.entry = Some(Entry {
                            phases: vec![
                                (Phase::ActorMessageReceiver, site),
                                (Phase::BeforeAsyncMethodActivation, site),
                                (Phase::TurnStart, site),
                            ],
                            keys,
                            forced: msg.forced,
                        });
                        let keys = [FlagKey::Message(msg.id), FlagKey::Promise(promise.id)];
                        let returned = self.call_then(&decl, args, site, |it, v| {
                            it.at(Phase::AfterAsyncMethodActivation, site, decl.body.close, &keys).map(|_| v)
                        });
                        match returned {
                            Ok(v) => self.resolve_promise(&promise, Ok(v), decl.body.close, false),
                            Err(Unwind::Error(e)) => {
                                let value = Value::Str(Arc::from(e.to_string()));
                                self.resolve_promise(&promise, Err(value), decl.body.close, false)
                                    .and(Err(Unwind::Error(e)))
                            }
                            Err(other) => Err(other),
                        }
                    }
                }
            }
            MessageBody::Handler { func, value, promise } => {
                self.push_scope(shipped::TURN, msg.id, start, func.name_span);
                self.entry = Some(Entry {
                    phases: vec![(Phase::OnPromiseResolution, promise.site), (Phase::TurnStart, promise.site)],
                    keys: vec![FlagKey::Message(msg.id), FlagKey::Actor(self.id), FlagKey::Promise(promise.id)],
                    forced: msg.forced,
                });
                let args = if func.params.is_empty() { Vec::new() } else { vec![value] };
                self.call(&func, args, func.name_span).map(|_| ())
            }
        };
        self.entry = None;
        self.turn_promise = None;
        self.pop_scope(end);
        result
    }
}

fn compare(op: BinOp, ord: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        BinOp::Lt => ord == Less,
        BinOp::Le => ord != Greater,
        BinOp::Gt => ord == Greater,
        BinOp::Ge => ord != Less,
        _ => unreachable!("comparison operator"),
    }
}

fn expect_lock(v: &Value, span: Span) -> Exec<Arc<LockObj>> {
    match v {
        Value::Lock(l) => Ok(l.clone()),
        other => type_error(span, "lock", other),
    }
}

fn expect_cond(v: &Value, span: Span) -> Exec<Arc<CondObj>> {
    match v {
        Value::Cond(c) => Ok(c.clone()),
        other => type_error(span, "condition", other),
    }
}

fn expect_promise(v: &Value, span: Span) -> Exec<Arc<PromiseObj>> {
    match v {
        Value::Promise(p) => Ok(p.clone()),
        other => type_error(span, "promise", other),
    }
}

//! Static source tagging. Every concurrency form gets its tag from syntax
//! alone, so the table can be shipped before the program runs.

use std::collections::BTreeMap;

use polydbg_protocol::{SourceLocation, SymbolId, Tag, TaggedLocation};

use super::ast::*;

/// Tags per span, ordered by (line, column, length). Tags within a span
/// follow [`Tag::ALL`] order.
pub type TagTable = BTreeMap<Span, Vec<Tag>>;

pub fn tag_table(program: &Program) -> TagTable {
    let mut t = Tagger { table: BTreeMap::new() };
    for span in &program.comments {
        t.add(*span, Tag::Comment);
    }
    for span in &program.keywords {
        t.add(*span, Tag::Keyword);
    }
    for g in &program.globals {
        t.expr(&g.value);
    }
    for f in &program.functions {
        t.block(&f.body);
    }
    for tags in t.table.values_mut() {
        tags.sort_by_key(|tag| Tag::ALL.iter().position(|t| t == tag));
        tags.dedup();
    }
    t.table
}

/// The Source message payload for a program whose uri is `file_symbol`.
pub fn collect_tagged_locations(program: &Program, file_symbol: SymbolId) -> Vec<TaggedLocation> {
    tag_table(program)
        .into_iter()
        .map(|(span, tags)| TaggedLocation {
            location: to_location(span, file_symbol),
            tags: tags.iter().map(|t| t.as_str().to_string()).collect(),
        })
        .collect()
}

pub fn to_location(span: Span, file_symbol: SymbolId) -> SourceLocation {
    let clamp = |v: u32| u16::try_from(v).unwrap_or(u16::MAX);
    SourceLocation::new(file_symbol, span.line, clamp(span.col), clamp(span.len))
}

pub fn from_location(location: &SourceLocation) -> Span {
    Span::new(location.line, location.column.into(), location.length.into())
}

struct Tagger {
    table: TagTable,
}

impl Tagger {
    fn add(&mut self, span: Span, tag: Tag) {
        self.table.entry(span).or_default().push(tag);
    }

    fn block(&mut self, block: &Block) {
        for stmt in &block.stmts {
            self.stmt(stmt);
        }
    }

    fn stmt(&mut self, stmt: &Stmt) {
        self.add(stmt.span, Tag::Statement);
        match &stmt.kind {
            StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => self.expr(value),
            StmtKind::If { cond, then, otherwise } => {
                self.expr(cond);
                self.block(then);
                if let Some(b) = otherwise {
                    self.block(b);
                }
            }
            StmtKind::While { cond, body } => {
                self.expr(cond);
                self.block(body);
            }
            StmtKind::Return(value) => {
                if let Some(v) = value {
                    self.expr(v);
                }
            }
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::Atomic { keyword, body } => {
                self.add(*keyword, Tag::Atomic);
                self.block(body);
            }
            StmtKind::Monitor { keyword, lock, body } => {
                self.add(*keyword, Tag::AcquireLock);
                self.add(body.close, Tag::ReleaseLock);
                self.expr(lock);
                self.block(body);
            }
        }
    }

    fn exprs(&mut self, exprs: &[Expr]) {
        for e in exprs {
            self.expr(e);
        }
    }

    fn expr(&mut self, expr: &Expr) {
        match &expr.kind {
            ExprKind::Int(_) | ExprKind::Str(_) | ExprKind::Bool(_) | ExprKind::Nil => {
                self.add(expr.span, Tag::Literal)
            }
            ExprKind::SelfRef | ExprKind::Var(_) | ExprKind::Field(_) => {}
            ExprKind::Array(items) => self.exprs(items),
            ExprKind::Index { target, index } => {
                self.expr(target);
                self.expr(index);
            }
            ExprKind::Unary { operand, .. } => self.expr(operand),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            ExprKind::Call { callee_span, args, .. } => {
                self.add(*callee_span, Tag::MethodCall);
                self.exprs(args);
            }
            ExprKind::Builtin { op, keyword, args } => {
                let tag = match op {
                    Builtin::Spawn(_) => Some(Tag::ActivityCreation),
                    Builtin::Join => Some(Tag::ActivityJoin),
                    Builtin::Acquire => Some(Tag::AcquireLock),
                    Builtin::Release => Some(Tag::ReleaseLock),
                    Builtin::Promise => Some(Tag::PromiseCreation),
                    _ => None,
                };
                if let Some(tag) = tag {
                    self.add(*keyword, tag);
                }
                self.exprs(args);
            }
            ExprKind::Method { receiver, method, name_span, args } => {
                match method {
                    MethodKind::ChannelSend => self.add(*name_span, Tag::ChannelWrite),
                    MethodKind::ChannelReceive => self.add(*name_span, Tag::ChannelRead),
                    MethodKind::CellGet | MethodKind::CellSet => {}
                }
                self.expr(receiver);
                self.exprs(args);
            }
            ExprKind::Send { target, arrow, args, .. } => {
                self.add(*arrow, Tag::EventualMessageSend);
                self.add(*arrow, Tag::PromiseCreation);
                self.expr(target);
                self.exprs(args);
            }
        }
    }
}

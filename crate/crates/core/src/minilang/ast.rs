//! Syntax tree. Nodes are immutable after parsing and shared across
//! activities behind `Arc`.

use std::sync::Arc;

/// 1-based position and length in characters, without a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub len: u32,
}

impl Span {
    pub const fn new(line: u32, col: u32, len: u32) -> Self {
        Self { line, col, len }
    }
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub functions: Vec<Arc<FnDecl>>,
    pub globals: Vec<GlobalDecl>,
    pub comments: Vec<Span>,
    /// Plain keyword tokens (not concurrency forms), for highlighting.
    pub keywords: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDecl {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnDecl {
    /// `Some(behavior)` for actor methods declared as `fn Behavior.name`.
    pub behavior: Option<String>,
    pub name: String,
    pub name_span: Span,
    pub params: Vec<String>,
    pub body: Block,
}

impl FnDecl {
    pub fn qualified_name(&self) -> String {
        match &self.behavior {
            Some(b) => format!("{b}.{}", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub open: Span,
    pub close: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    /// The Statement-tagged location: the statement's text on its first line.
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let { name: String, value: Expr },
    Assign { target: AssignTarget, value: Expr },
    If { cond: Expr, then: Block, otherwise: Option<Block> },
    While { cond: Expr, body: Block },
    Return(Option<Expr>),
    Expr(Expr),
    Atomic { keyword: Span, body: Block },
    /// `monitor(lock) { ... }`; `keyword` carries AcquireLock and
    /// `body.close` carries ReleaseLock.
    Monitor { keyword: Span, lock: Expr, body: Block },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssignTarget {
    Var(String),
    Field(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivityKind {
    Thread,
    Actor,
    Process,
    Task,
}

impl ActivityKind {
    pub const fn label(self) -> &'static str {
        use polydbg_protocol::catalog::shipped;
        match self {
            ActivityKind::Thread => shipped::THREAD,
            ActivityKind::Actor => shipped::ACTOR,
            ActivityKind::Process => shipped::PROCESS,
            ActivityKind::Task => shipped::TASK,
        }
    }
}

/// Built-in forms written with call syntax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Spawn(ActivityKind),
    Join,
    Acquire,
    Release,
    Wait,
    Signal,
    WhenResolved,
    Resolve,
    Lock,
    Cond,
    Channel,
    Cell,
    Promise,
    Print,
    Len,
}

/// Methods with dedicated syntax on channels and cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    ChannelSend,
    ChannelReceive,
    CellGet,
    CellSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Str(String),
    Bool(bool),
    Nil,
    SelfRef,
    Array(Vec<Expr>),
    Var(String),
    Field(String),
    Index { target: Box<Expr>, index: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Call of a user function; `callee_span` carries MethodCall.
    Call { callee: String, callee_span: Span, args: Vec<Expr> },
    /// `keyword` is the span of the form's name token.
    Builtin { op: Builtin, keyword: Span, args: Vec<Expr> },
    Method { receiver: Box<Expr>, method: MethodKind, name_span: Span, args: Vec<Expr> },
    /// `target <- method(args)`; `arrow` carries EventualMessageSend and
    /// PromiseCreation.
    Send { target: Box<Expr>, method: String, arrow: Span, args: Vec<Expr> },
}

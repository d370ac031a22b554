use std::collections::HashSet;
use std::sync::Arc;

use super::ast::*;
use super::lexer::{lex, Keyword, Punct, Token, TokenKind};
use super::ParseError;

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let lexed = lex(text)?;
    let mut parser = Parser { tokens: lexed.tokens, pos: 0, keywords: Vec::new() };
    let mut functions: Vec<Arc<FnDecl>> = Vec::new();
    let mut globals = Vec::new();
    let mut seen = HashSet::new();

    while !parser.at_eof() {
        match parser.peek().kind {
            TokenKind::Kw(Keyword::Fn) => {
                let decl = parser.function()?;
                if !seen.insert(decl.qualified_name()) {
                    return Err(ParseError::new(
                        decl.name_span,
                        format!("function `{}` is defined twice", decl.qualified_name()),
                    ));
                }
                functions.push(Arc::new(decl));
            }
            TokenKind::Kw(Keyword::Let) => {
                let start = parser.pos;
                parser.keyword_token();
                let (name, _) = parser.ident()?;
                parser.expect(Punct::Assign)?;
                let value = parser.expr()?;
                parser.expect(Punct::Semi)?;
                globals.push(GlobalDecl { name, value, span: parser.first_line_span(start) });
            }
            _ => return Err(parser.error_here("expected fn main")),
        }
    }

    match functions.iter().find(|f| f.behavior.is_none() && f.name == "main") {
        None => Err(ParseError::new(parser.peek().span, "expected fn main")),
        Some(main) if !main.params.is_empty() => {
            Err(ParseError::new(main.name_span, "main takes no parameters"))
        }
        Some(_) => Ok(Program { functions, globals, comments: lexed.comments, keywords: parser.keywords }),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    keywords: Vec<Span>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Token {
        &self.tokens[(self.pos + offset).min(self.tokens.len() - 1)]
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn error_here(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.peek().span, msg)
    }

    fn describe(kind: &TokenKind) -> String {
        match kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Int(i) => format!("`{i}`"),
            TokenKind::Str(_) => "string literal".into(),
            TokenKind::Kw(k) => format!("keyword {k:?}"),
            TokenKind::Punct(p) => format!("{p:?}"),
            TokenKind::Eof => "end of file".into(),
        }
    }

    fn check(&self, p: Punct) -> bool {
        self.peek().kind == TokenKind::Punct(p)
    }

    fn eat(&mut self, p: Punct) -> bool {
        if self.check(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: Punct) -> Result<Span, ParseError> {
        if self.check(p) {
            Ok(self.advance().span)
        } else {
            Err(self.error_here(format!("expected {p:?}, found {}", Self::describe(&self.peek().kind))))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek().kind.clone() {
            TokenKind::Ident(name) => {
                let span = self.advance().span;
                Ok((name, span))
            }
            other => Err(self.error_here(format!("expected identifier, found {}", Self::describe(&other)))),
        }
    }

    /// Consumes a plain keyword and records it for highlighting.
    fn keyword_token(&mut self) -> Span {
        let span = self.advance().span;
        self.keywords.push(span);
        span
    }

    /// Span from token `start` to the last consumed token on the same line.
    fn first_line_span(&self, start: usize) -> Span {
        let first = self.tokens[start].span;
        let end = self.tokens[start..self.pos]
            .iter()
            .filter(|t| t.span.line == first.line)
            .map(|t| t.span.col + t.span.len)
            .max()
            .unwrap_or(first.col + first.len);
        Span::new(first.line, first.col, end - first.col)
    }

    fn function(&mut self) -> Result<FnDecl, ParseError> {
        self.keyword_token();
        let (first, first_span) = self.ident()?;
        let (behavior, name, name_span) = if self.eat(Punct::Dot) {
            let (method, method_span) = self.ident()?;
            (Some(first), method, method_span)
        } else {
            (None, first, first_span)
        };
        self.expect(Punct::LParen)?;
        let mut params = Vec::new();
        if !self.check(Punct::RParen) {
            loop {
                let (param, span) = self.ident()?;
                if params.contains(&param) {
                    return Err(ParseError::new(span, format!("duplicate parameter `{param}`")));
                }
                params.push(param);
                if !self.eat(Punct::Comma) {
                    break;
                }
            }
        }
        self.expect(Punct::RParen)?;
        let body = self.block()?;
        Ok(FnDecl { behavior, name, name_span, params, body })
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        let open = self.expect(Punct::LBrace)?;
        let mut stmts = Vec::new();
        while !self.check(Punct::RBrace) {
            if self.at_eof() {
                return Err(self.error_here("expected `}`, found end of file"));
            }
            stmts.push(self.stmt()?);
        }
        let close = self.advance().span;
        Ok(Block { stmts, open, close })
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.pos;
        let kind = match self.peek().kind {
            TokenKind::Kw(Keyword::Let) => {
                self.keyword_token();
                let (name, _) = self.ident()?;
                self.expect(Punct::Assign)?;
                let value = self.expr()?;
                self.expect(Punct::Semi)?;
                StmtKind::Let { name, value }
            }
            TokenKind::Kw(Keyword::If) => self.if_stmt()?,
            TokenKind::Kw(Keyword::While) => {
                self.keyword_token();
                let cond = self.expr()?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            TokenKind::Kw(Keyword::Return) => {
                self.keyword_token();
                let value = if self.check(Punct::Semi) { None } else { Some(self.expr()?) };
                self.expect(Punct::Semi)?;
                StmtKind::Return(value)
            }
            TokenKind::Kw(Keyword::Atomic) => {
                let keyword = self.advance().span;
                let body = self.block()?;
                StmtKind::Atomic { keyword, body }
            }
            TokenKind::Kw(Keyword::Monitor) => {
                let keyword = self.advance().span;
                self.expect(Punct::LParen)?;
                let lock = self.expr()?;
                self.expect(Punct::RParen)?;
                let body = self.block()?;
                StmtKind::Monitor { keyword, lock, body }
            }
            TokenKind::Ident(_) if self.peek_at(1).kind == TokenKind::Punct(Punct::Assign) => {
                let (name, _) = self.ident()?;
                self.advance();
                let value = self.expr()?;
                self.expect(Punct::Semi)?;
                StmtKind::Assign { target: AssignTarget::Var(name), value }
            }
            TokenKind::Kw(Keyword::SelfRef)
                if self.peek_at(1).kind == TokenKind::Punct(Punct::Dot)
                    && matches!(self.peek_at(2).kind, TokenKind::Ident(_))
                    && self.peek_at(3).kind == TokenKind::Punct(Punct::Assign) =>
            {
                self.keyword_token();
                self.advance();
                let (field, _) = self.ident()?;
                self.advance();
                let value = self.expr()?;
                self.expect(Punct::Semi)?;
                StmtKind::Assign { target: AssignTarget::Field(field), value }
            }
            _ => {
                let expr = self.expr()?;
                self.expect(Punct::Semi)?;
                StmtKind::Expr(expr)
            }
        };
        Ok(Stmt { kind, span: self.first_line_span(start) })
    }

    fn if_stmt(&mut self) -> Result<StmtKind, ParseError> {
        self.keyword_token();
        let cond = self.expr()?;
        let then = self.block()?;
        let otherwise = if self.peek().kind == TokenKind::Kw(Keyword::Else) {
            self.keyword_token();
            if self.peek().kind == TokenKind::Kw(Keyword::If) {
                let start = self.pos;
                let nested = self.if_stmt()?;
                let span = self.first_line_span(start);
                let close = self.tokens[self.pos - 1].span;
                Some(Block { stmts: vec![Stmt { kind: nested, span }], open: span, close })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(StmtKind::If { cond, then, otherwise })
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Punct::LParen)?;
        let mut args = Vec::new();
        if !self.check(Punct::RParen) {
            loop {
                args.push(self.expr()?);
                if !self.eat(Punct::Comma) {
                    break;
                }
            }
        }
        self.expect(Punct::RParen)?;
        Ok(args)
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let target = self.binary(0)?;
        if self.check(Punct::Arrow) {
            let arrow = self.advance().span;
            let (method, _) = self.ident()?;
            let args = self.args()?;
            let span = target.span;
            return Ok(Expr {
                kind: ExprKind::Send { target: Box::new(target), method, arrow, args },
                span,
            });
        }
        Ok(target)
    }

    fn binop(&self, level: usize) -> Option<BinOp> {
        let TokenKind::Punct(p) = self.peek().kind else { return None };
        let op = match (level, p) {
            (0, Punct::OrOr) => BinOp::Or,
            (1, Punct::AndAnd) => BinOp::And,
            (2, Punct::EqEq) => BinOp::Eq,
            (2, Punct::NotEq) => BinOp::Ne,
            (3, Punct::Lt) => BinOp::Lt,
            (3, Punct::Le) => BinOp::Le,
            (3, Punct::Gt) => BinOp::Gt,
            (3, Punct::Ge) => BinOp::Ge,
            (4, Punct::Plus) => BinOp::Add,
            (4, Punct::Minus) => BinOp::Sub,
            (5, Punct::Star) => BinOp::Mul,
            (5, Punct::Slash) => BinOp::Div,
            (5, Punct::Percent) => BinOp::Rem,
            _ => return None,
        };
        Some(op)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, ParseError> {
        if level > 5 {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.binop(level) {
            self.advance();
            let rhs = self.binary(level + 1)?;
            let span = lhs.span;
            lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let op = match self.peek().kind {
            TokenKind::Punct(Punct::Minus) => UnOp::Neg,
            TokenKind::Punct(Punct::Bang) => UnOp::Not,
            _ => return self.postfix(),
        };
        let span = self.advance().span;
        let operand = self.unary()?;
        Ok(Expr { kind: ExprKind::Unary { op, operand: Box::new(operand) }, span })
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.primary()?;
        loop {
            if self.eat(Punct::Dot) {
                let (name, name_span) = self.ident()?;
                if self.check(Punct::LParen) {
                    let method = match name.as_str() {
                        "send" => MethodKind::ChannelSend,
                        "receive" => MethodKind::ChannelReceive,
                        "get" => MethodKind::CellGet,
                        "set" => MethodKind::CellSet,
                        _ => return Err(ParseError::new(name_span, format!("unknown method `{name}`"))),
                    };
                    let args = self.args()?;
                    let expected = usize::from(matches!(method, MethodKind::ChannelSend | MethodKind::CellSet));
                    if args.len() != expected {
                        return Err(ParseError::new(
                            name_span,
                            format!("`{name}` takes {expected} argument(s), got {}", args.len()),
                        ));
                    }
                    let span = expr.span;
                    expr = Expr {
                        kind: ExprKind::Method { receiver: Box::new(expr), method, name_span, args },
                        span,
                    };
                } else if expr.kind == ExprKind::SelfRef {
                    expr = Expr { kind: ExprKind::Field(name), span: expr.span };
                } else {
                    return Err(ParseError::new(name_span, "fields exist only on `self`"));
                }
            } else if self.eat(Punct::LBracket) {
                let index = self.expr()?;
                self.expect(Punct::RBracket)?;
                let span = expr.span;
                expr = Expr { kind: ExprKind::Index { target: Box::new(expr), index: Box::new(index) }, span };
            } else {
                return Ok(expr);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().clone();
        let span = tok.span;
        let kind = match tok.kind {
            TokenKind::Int(i) => {
                self.advance();
                ExprKind::Int(i)
            }
            TokenKind::Str(s) => {
                self.advance();
                ExprKind::Str(s)
            }
            TokenKind::Kw(Keyword::True) => {
                self.advance();
                ExprKind::Bool(true)
            }
            TokenKind::Kw(Keyword::False) => {
                self.advance();
                ExprKind::Bool(false)
            }
            TokenKind::Kw(Keyword::Nil) => {
                self.advance();
                ExprKind::Nil
            }
            TokenKind::Kw(Keyword::SelfRef) => {
                self.keyword_token();
                ExprKind::SelfRef
            }
            TokenKind::Ident(name) => {
                self.advance();
                if self.check(Punct::LParen) {
                    let args = self.args()?;
                    ExprKind::Call { callee: name, callee_span: span, args }
                } else {
                    ExprKind::Var(name)
                }
            }
            TokenKind::Punct(Punct::LParen) => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Punct::RParen)?;
                return Ok(inner);
            }
            TokenKind::Punct(Punct::LBracket) => {
                self.advance();
                let mut items = Vec::new();
                if !self.check(Punct::RBracket) {
                    loop {
                        items.push(self.expr()?);
                        if !self.eat(Punct::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Punct::RBracket)?;
                ExprKind::Array(items)
            }
            TokenKind::Kw(kw) => return self.builtin(kw),
            other => return Err(self.error_here(format!("expected expression, found {}", Self::describe(&other)))),
        };
        Ok(Expr { kind, span })
    }

    fn builtin(&mut self, kw: Keyword) -> Result<Expr, ParseError> {
        let (op, arity): (Builtin, (usize, usize)) = match kw {
            Keyword::Spawn => (Builtin::Spawn(ActivityKind::Thread), (1, usize::MAX)),
            Keyword::Task => (Builtin::Spawn(ActivityKind::Task), (1, usize::MAX)),
            Keyword::Process => (Builtin::Spawn(ActivityKind::Process), (1, usize::MAX)),
            Keyword::Actor => (Builtin::Spawn(ActivityKind::Actor), (1, 1)),
            Keyword::Join => (Builtin::Join, (1, 1)),
            Keyword::Acquire => (Builtin::Acquire, (1, 1)),
            Keyword::Release => (Builtin::Release, (1, 1)),
            Keyword::Wait => (Builtin::Wait, (2, 2)),
            Keyword::Signal => (Builtin::Signal, (2, 2)),
            Keyword::WhenResolved => (Builtin::WhenResolved, (2, 2)),
            Keyword::Resolve => (Builtin::Resolve, (2, 2)),
            Keyword::Lock => (Builtin::Lock, (0, 0)),
            Keyword::Cond => (Builtin::Cond, (0, 0)),
            Keyword::Channel => (Builtin::Channel, (0, 0)),
            Keyword::Cell => (Builtin::Cell, (1, 1)),
            Keyword::Promise => (Builtin::Promise, (0, 0)),
            Keyword::Print => (Builtin::Print, (0, usize::MAX)),
            Keyword::Len => (Builtin::Len, (1, 1)),
            other => return Err(self.error_here(format!("expected expression, found keyword {other:?}"))),
        };
        let is_concurrency_form = matches!(
            op,
            Builtin::Spawn(_) | Builtin::Join | Builtin::Acquire | Builtin::Release | Builtin::Promise
        );
        let keyword = if is_concurrency_form { self.advance().span } else { self.keyword_token() };
        let args = self.args()?;
        if args.len() < arity.0 || args.len() > arity.1 {
            return Err(ParseError::new(keyword, format!("wrong number of arguments ({})", args.len())));
        }
        Ok(Expr { kind: ExprKind::Builtin { op, keyword, args }, span: keyword })
    }
}

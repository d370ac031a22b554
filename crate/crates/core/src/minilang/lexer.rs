use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Fn,
    Let,
    If,
    Else,
    While,
    Return,
    True,
    False,
    Nil,
    SelfRef,
    Atomic,
    Monitor,
    Spawn,
    Task,
    Process,
    Actor,
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

impl Keyword {
    fn from_ident(s: &str) -> Option<Self> {
        Some(match s {
            "fn" => Keyword::Fn,
            "let" => Keyword::Let,
            "if" => Keyword::If,
            "else" => Keyword::Else,
            "while" => Keyword::While,
            "return" => Keyword::Return,
            "true" => Keyword::True,
            "false" => Keyword::False,
            "nil" => Keyword::Nil,
            "self" => Keyword::SelfRef,
            "atomic" => Keyword::Atomic,
            "monitor" => Keyword::Monitor,
            "spawn" => Keyword::Spawn,
            "task" => Keyword::Task,
            "process" => Keyword::Process,
            "actor" => Keyword::Actor,
            "join" => Keyword::Join,
            "acquire" => Keyword::Acquire,
            "release" => Keyword::Release,
            "wait" => Keyword::Wait,
            "signal" => Keyword::Signal,
            "whenResolved" => Keyword::WhenResolved,
            "resolve" => Keyword::Resolve,
            "lock" => Keyword::Lock,
            "cond" => Keyword::Cond,
            "channel" => Keyword::Channel,
            "cell" => Keyword::Cell,
            "promise" => Keyword::Promise,
            "print" => Keyword::Print,
            "len" => Keyword::Len,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Punct {
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Assign,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    AndAnd,
    OrOr,
    Bang,
    Arrow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Str(String),
    Kw(Keyword),
    Punct(Punct),
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<Span>,
}

pub fn lex(text: &str) -> Result<Lexed, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut comments = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        let start = (line, col);
        let span = |len: usize| Span::new(start.0, start.1, len as u32);

        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            let len = chars[i..].iter().take_while(|c| **c != '\n').count();
            let trimmed = chars[i..i + len].iter().rev().skip_while(|c| c.is_whitespace()).count();
            comments.push(span(trimmed));
            i += len;
            col += len as u32;
            continue;
        }
        if c.is_ascii_digit() {
            let len = chars[i..].iter().take_while(|c| c.is_ascii_digit()).count();
            let digits: String = chars[i..i + len].iter().collect();
            let value = digits
                .parse::<i64>()
                .map_err(|_| ParseError::new(span(len), "integer literal out of range"))?;
            tokens.push(Token { kind: TokenKind::Int(value), span: span(len) });
            i += len;
            col += len as u32;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let len = chars[i..].iter().take_while(|c| c.is_alphanumeric() || **c == '_').count();
            let word: String = chars[i..i + len].iter().collect();
            let kind = match Keyword::from_ident(&word) {
                Some(kw) => TokenKind::Kw(kw),
                None => TokenKind::Ident(word),
            };
            tokens.push(Token { kind, span: span(len) });
            i += len;
            col += len as u32;
            continue;
        }
        if c == '"' {
            let mut value = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None | Some('\n') => return Err(ParseError::new(span(j - i), "unterminated string literal")),
                    Some('"') => break,
                    Some('\\') => {
                        let escaped = match chars.get(j + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(ParseError::new(Span::new(line, col + (j - i) as u32, 2), "bad escape")),
                        };
                        value.push(escaped);
                        j += 2;
                    }
                    Some(ch) => {
                        value.push(*ch);
                        j += 1;
                    }
                }
            }
            let len = j + 1 - i;
            tokens.push(Token { kind: TokenKind::Str(value), span: span(len) });
            i += len;
            col += len as u32;
            continue;
        }

        let next = chars.get(i + 1).copied();
        let (punct, len) = match (c, next) {
            ('<', Some('-')) => (Punct::Arrow, 2),
            ('<', Some('=')) => (Punct::Le, 2),
            ('>', Some('=')) => (Punct::Ge, 2),
            ('=', Some('=')) => (Punct::EqEq, 2),
            ('!', Some('=')) => (Punct::NotEq, 2),
            ('&', Some('&')) => (Punct::AndAnd, 2),
            ('|', Some('|')) => (Punct::OrOr, 2),
            ('(', _) => (Punct::LParen, 1),
            (')', _) => (Punct::RParen, 1),
            ('{', _) => (Punct::LBrace, 1),
            ('}', _) => (Punct::RBrace, 1),
            ('[', _) => (Punct::LBracket, 1),
            (']', _) => (Punct::RBracket, 1),
            (',', _) => (Punct::Comma, 1),
            (';', _) => (Punct::Semi, 1),
            ('.', _) => (Punct::Dot, 1),
            ('=', _) => (Punct::Assign, 1),
            ('<', _) => (Punct::Lt, 1),
            ('>', _) => (Punct::Gt, 1),
            ('+', _) => (Punct::Plus, 1),
            ('-', _) => (Punct::Minus, 1),
            ('*', _) => (Punct::Star, 1),
            ('/', _) => (Punct::Slash, 1),
            ('%', _) => (Punct::Percent, 1),
            ('!', _) => (Punct::Bang, 1),
            _ => return Err(ParseError::new(span(1), format!("unexpected character `{c}`"))),
        };
        tokens.push(Token { kind: TokenKind::Punct(punct), span: span(len) });
        i += len;
        col += len as u32;
    }

    tokens.push(Token { kind: TokenKind::Eof, span: Span::new(line, col, 1) });
    Ok(Lexed { tokens, comments })
}

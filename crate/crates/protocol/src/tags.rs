//! The source-tag vocabulary the shipped runtime attaches to locations.
//!
//! Clients treat tags as opaque strings; only the runtime and the shipped
//! catalog give them meaning.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    ActivityCreation,
    ActivityJoin,
    EventualMessageSend,
    PromiseCreation,
    ChannelWrite,
    ChannelRead,
    Atomic,
    AcquireLock,
    ReleaseLock,
    Keyword,
    Literal,
    Comment,
    Statement,
    MethodCall,
}

impl Tag {
    pub const ALL: [Tag; 14] = [
        Tag::ActivityCreation,
        Tag::ActivityJoin,
        Tag::EventualMessageSend,
        Tag::PromiseCreation,
        Tag::ChannelWrite,
        Tag::ChannelRead,
        Tag::Atomic,
        Tag::AcquireLock,
        Tag::ReleaseLock,
        Tag::Keyword,
        Tag::Literal,
        Tag::Comment,
        Tag::Statement,
        Tag::MethodCall,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            Tag::ActivityCreation => "ActivityCreation",
            Tag::ActivityJoin => "ActivityJoin",
            Tag::EventualMessageSend => "EventualMessageSend",
            Tag::PromiseCreation => "PromiseCreation",
            Tag::ChannelWrite => "ChannelWrite",
            Tag::ChannelRead => "ChannelRead",
            Tag::Atomic => "Atomic",
            Tag::AcquireLock => "AcquireLock",
            Tag::ReleaseLock => "ReleaseLock",
            Tag::Keyword => "Keyword",
            Tag::Literal => "Literal",
            Tag::Comment => "Comment",
            Tag::Statement => "Statement",
            Tag::MethodCall => "MethodCall",
        }
    }

    /// Syntax tags only drive highlighting and sequential stepping.
    pub const fn is_syntax(self) -> bool {
        matches!(
            self,
            Tag::Keyword | Tag::Literal | Tag::Comment | Tag::Statement | Tag::MethodCall
        )
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag `{s}`"))
    }
}

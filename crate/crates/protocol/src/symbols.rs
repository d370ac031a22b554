use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

/// 16-bit symbol id. Id 0 is always the empty string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolId(pub u16);

impl SymbolId {
    pub const EMPTY: SymbolId = SymbolId(0);
}

/// A symbol definition as carried by the Symbols message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbol {
    pub id: SymbolId,
    pub text: String,
}

#[derive(Debug)]
struct Inner {
    by_text: HashMap<Arc<str>, SymbolId>,
    texts: Vec<Arc<str>>,
    sent: usize,
}

/// Runtime-side interner. Ids are assigned in order and never reused.
#[derive(Debug)]
pub struct SymbolTable {
    inner: Mutex<Inner>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let empty: Arc<str> = Arc::from("");
        let mut by_text = HashMap::new();
        by_text.insert(empty.clone(), SymbolId::EMPTY);
        Self {
            inner: Mutex::new(Inner { by_text, texts: vec![empty], sent: 1 }),
        }
    }

    /// Interns `text`, returning `None` once all 65536 ids are taken.
    pub fn try_intern(&self, text: &str) -> Option<SymbolId> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(id) = inner.by_text.get(text) {
            return Some(*id);
        }
        let next = u16::try_from(inner.texts.len()).ok()?;
        let text: Arc<str> = Arc::from(text);
        inner.texts.push(text.clone());
        inner.by_text.insert(text, SymbolId(next));
        Some(SymbolId(next))
    }

    /// Interns `text`. A full table maps further strings to the empty symbol.
    pub fn intern(&self, text: &str) -> SymbolId {
        self.try_intern(text).unwrap_or(SymbolId::EMPTY)
    }

    pub fn text(&self, id: SymbolId) -> Option<Arc<str>> {
        self.inner.lock().unwrap().texts.get(id.0 as usize).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().texts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All symbols defined so far, including id 0.
    pub fn snapshot(&self) -> Vec<Symbol> {
        let inner = self.inner.lock().unwrap();
        to_symbols(&inner.texts, 0)
    }

    /// Symbols interned since the previous call, for the next Symbols message.
    /// Id 0 is implicit and never reported.
    pub fn take_unsent(&self) -> Vec<Symbol> {
        let mut inner = self.inner.lock().unwrap();
        let out = to_symbols(&inner.texts, inner.sent);
        inner.sent = inner.texts.len();
        out
    }
}

fn to_symbols(texts: &[Arc<str>], from: usize) -> Vec<Symbol> {
    texts
        .iter()
        .enumerate()
        .skip(from)
        .map(|(i, t)| Symbol { id: SymbolId(i as u16), text: t.to_string() })
        .collect()
}

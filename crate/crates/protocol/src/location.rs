use serde::{Deserialize, Serialize};

use crate::symbols::SymbolId;

/// A character range in a source file, 1-based line and column.
///
/// Columns and lengths count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceLocation {
    pub file_symbol: SymbolId,
    pub line: u32,
    pub column: u16,
    pub length: u16,
}

impl SourceLocation {
    pub const fn new(file_symbol: SymbolId, line: u32, column: u16, length: u16) -> Self {
        Self { file_symbol, line, column, length }
    }

    /// Returns the text covered by this location, or `None` if the range
    /// falls outside `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        if self.line == 0 || self.column == 0 {
            return None;
        }
        let line = text.split('\n').nth(self.line as usize - 1)?;
        let start = line.char_indices().nth(self.column as usize - 1).map(|(i, _)| i)?;
        let rest = &line[start..];
        let end = match rest.char_indices().nth(self.length as usize) {
            Some((i, _)) => i,
            None if rest.chars().count() == self.length as usize => rest.len(),
            None => return None,
        };
        Some(&rest[..end])
    }
}

impl std::fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.line, self.column, self.length)
    }
}

/// One entry of a Source message: a location and the opaque tags on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedLocation {
    pub location: SourceLocation,
    pub tags: Vec<String>,
}

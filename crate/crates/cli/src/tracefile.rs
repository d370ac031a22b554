//! Self-describing trace files: one JSON header line with the catalog and
//! the final symbol table, then the raw binary trace stream.

use std::io::{self, Write};
use std::path::Path;

use polydbg_protocol::{MetaDataCatalog, Symbol};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHeader {
    pub catalog: MetaDataCatalog,
    pub symbols: Vec<Symbol>,
}

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("missing header line")]
    MissingHeader,
    #[error("bad header: {0}")]
    BadHeader(#[from] serde_json::Error),
}

pub fn write(path: &Path, header: &TraceHeader, stream: &[u8]) -> io::Result<()> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, header)?;
    file.write_all(b"\n")?;
    file.write_all(stream)?;
    file.flush()
}

/// Returns the header, the stream and the stream's offset in the file.
pub fn read(path: &Path) -> Result<(TraceHeader, Vec<u8>, usize), TraceFileError> {
    let mut bytes = std::fs::read(path)?;
    let newline = bytes.iter().position(|b| *b == b'\n').ok_or(TraceFileError::MissingHeader)?;
    let header = serde_json::from_slice(&bytes[..newline])?;
    let stream = bytes.split_off(newline + 1);
    Ok((header, stream, newline + 1))
}

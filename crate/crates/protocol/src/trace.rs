//! Binary trace records.
//!
//! All integers are little-endian. A location is encoded in 10 bytes:
//! file symbol `u16`, line `u32`, column `u16`, length `u16`.
//!
//! | record                | layout                                   |
//! |-----------------------|------------------------------------------|
//! | ActivityContext       | `0x01` id:u64                            |
//! | ActivityCreation      | marker id:u64 name:u16 loc               |
//! | ActivityCompletion    | marker                                   |
//! | ScopeStart            | marker scope:u64 loc                     |
//! | ScopeEnd              | marker                                   |
//! | PassiveEntityCreation | marker entity:u64 loc                    |
//! | SendOperation         | marker entity:u64 target:u64             |
//! | ReceiveOperation      | marker source:u64                        |
//!
//! Only the context marker is fixed; every other marker byte comes from the
//! catalog, which is what the decoder uses to tell records apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{MarkerKind, MetaDataCatalog};
use crate::location::SourceLocation;
use crate::symbols::SymbolId;

pub const ACTIVITY_CONTEXT_MARKER: u8 = 0x01;
pub const LOCATION_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum TraceEvent {
    ActivityContext { activity_id: u64 },
    ActivityCreation { marker: u8, activity_id: u64, name: SymbolId, location: SourceLocation },
    ActivityCompletion { marker: u8 },
    ScopeStart { marker: u8, scope_id: u64, location: SourceLocation },
    ScopeEnd { marker: u8 },
    PassiveEntityCreation { marker: u8, entity_id: u64, location: SourceLocation },
    SendOperation { marker: u8, entity_id: u64, target_id: u64 },
    ReceiveOperation { marker: u8, source_id: u64 },
}

impl TraceEvent {
    pub fn marker(&self) -> u8 {
        match *self {
            TraceEvent::ActivityContext { .. } => ACTIVITY_CONTEXT_MARKER,
            TraceEvent::ActivityCreation { marker, .. }
            | TraceEvent::ActivityCompletion { marker }
            | TraceEvent::ScopeStart { marker, .. }
            | TraceEvent::ScopeEnd { marker }
            | TraceEvent::PassiveEntityCreation { marker, .. }
            | TraceEvent::SendOperation { marker, .. }
            | TraceEvent::ReceiveOperation { marker, .. } => marker,
        }
    }

    /// Copy of this event with its marker replaced.
    pub fn with_marker(mut self, new: u8) -> Self {
        match &mut self {
            TraceEvent::ActivityContext { .. } => {}
            TraceEvent::ActivityCreation { marker, .. }
            | TraceEvent::ActivityCompletion { marker }
            | TraceEvent::ScopeStart { marker, .. }
            | TraceEvent::ScopeEnd { marker }
            | TraceEvent::PassiveEntityCreation { marker, .. }
            | TraceEvent::SendOperation { marker, .. }
            | TraceEvent::ReceiveOperation { marker, .. } => *marker = new,
        }
        self
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            TraceEvent::ActivityContext { .. } => 9,
            TraceEvent::ActivityCreation { .. } => 1 + 8 + 2 + LOCATION_LEN,
            TraceEvent::ActivityCompletion { .. } | TraceEvent::ScopeEnd { .. } => 1,
            TraceEvent::ScopeStart { .. } | TraceEvent::PassiveEntityCreation { .. } => {
                1 + 8 + LOCATION_LEN
            }
            TraceEvent::SendOperation { .. } => 17,
            TraceEvent::ReceiveOperation { .. } => 9,
        }
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.marker());
        match *self {
            TraceEvent::ActivityContext { activity_id } => out.extend_from_slice(&activity_id.to_le_bytes()),
            TraceEvent::ActivityCreation { activity_id, name, location, .. } => {
                out.extend_from_slice(&activity_id.to_le_bytes());
                out.extend_from_slice(&name.0.to_le_bytes());
                encode_location(&location, out);
            }
            TraceEvent::ActivityCompletion { .. } | TraceEvent::ScopeEnd { .. } => {}
            TraceEvent::ScopeStart { scope_id: id, location, .. }
            | TraceEvent::PassiveEntityCreation { entity_id: id, location, .. } => {
                out.extend_from_slice(&id.to_le_bytes());
                encode_location(&location, out);
            }
            TraceEvent::SendOperation { entity_id, target_id, .. } => {
                out.extend_from_slice(&entity_id.to_le_bytes());
                out.extend_from_slice(&target_id.to_le_bytes());
            }
            TraceEvent::ReceiveOperation { source_id, .. } => out.extend_from_slice(&source_id.to_le_bytes()),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }
}

fn encode_location(loc: &SourceLocation, out: &mut Vec<u8>) {
    out.extend_from_slice(&loc.file_symbol.0.to_le_bytes());
    out.extend_from_slice(&loc.line.to_le_bytes());
    out.extend_from_slice(&loc.column.to_le_bytes());
    out.extend_from_slice(&loc.length.to_le_bytes());
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceDecodeError {
    #[error("unknown marker byte {marker:#04x} at offset {offset}")]
    UnknownMarker { marker: u8, offset: usize },
    #[error("trace stream truncated inside record starting at offset {offset}")]
    TruncatedStream { offset: usize },
}

impl TraceDecodeError {
    pub fn offset(&self) -> usize {
        match *self {
            TraceDecodeError::UnknownMarker { offset, .. } | TraceDecodeError::TruncatedStream { offset } => offset,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    start: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], TraceDecodeError> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(TraceDecodeError::TruncatedStream { offset: self.start })?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }

    fn u16(&mut self) -> Result<u16, TraceDecodeError> {
        self.take::<2>().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32, TraceDecodeError> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, TraceDecodeError> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn location(&mut self) -> Result<SourceLocation, TraceDecodeError> {
        Ok(SourceLocation {
            file_symbol: SymbolId(self.u16()?),
            line: self.u32()?,
            column: self.u16()?,
            length: self.u16()?,
        })
    }
}

/// Catalog-driven decoder that keeps the current emitting activity across
/// calls, so a stream may be fed in chunks split at record boundaries.
pub struct TraceDecoder {
    markers: [Option<MarkerKind>; 256],
    current: u64,
    consumed: usize,
}

impl TraceDecoder {
    pub fn new(catalog: &MetaDataCatalog) -> Self {
        Self { markers: catalog.marker_table(), current: 0, consumed: 0 }
    }

    /// The activity the next record belongs to; 0 before any context record.
    pub fn current_activity(&self) -> u64 {
        self.current
    }

    /// Decodes one chunk. Error offsets count from the start of the whole
    /// stream fed to this decoder.
    pub fn decode(&mut self, bytes: &[u8]) -> Result<Vec<(u64, TraceEvent)>, TraceDecodeError> {
        let mut out = Vec::new();
        let mut reader = Reader { bytes, pos: 0, start: 0 };
        let base = self.consumed;
        let rebase = |e: TraceDecodeError| match e {
            TraceDecodeError::UnknownMarker { marker, offset } => {
                TraceDecodeError::UnknownMarker { marker, offset: offset + base }
            }
            TraceDecodeError::TruncatedStream { offset } => {
                TraceDecodeError::TruncatedStream { offset: offset + base }
            }
        };
        while reader.pos < bytes.len() {
            reader.start = reader.pos;
            let marker = bytes[reader.pos];
            reader.pos += 1;
            if marker == ACTIVITY_CONTEXT_MARKER {
                self.current = reader.u64().map_err(rebase)?;
                continue;
            }
            let kind = self.markers[marker as usize]
                .ok_or(TraceDecodeError::UnknownMarker { marker, offset: reader.start })
                .map_err(rebase)?;
            let event = read_record(&mut reader, marker, kind).map_err(rebase)?;
            out.push((self.current, event));
        }
        self.consumed += bytes.len();
        Ok(out)
    }
}

fn read_record(r: &mut Reader<'_>, marker: u8, kind: MarkerKind) -> Result<TraceEvent, TraceDecodeError> {
    Ok(match kind {
        MarkerKind::ActivityCreation(_) => TraceEvent::ActivityCreation {
            marker,
            activity_id: r.u64()?,
            name: SymbolId(r.u16()?),
            location: r.location()?,
        },
        MarkerKind::ActivityCompletion(_) => TraceEvent::ActivityCompletion { marker },
        MarkerKind::ScopeStart(_) => TraceEvent::ScopeStart { marker, scope_id: r.u64()?, location: r.location()? },
        MarkerKind::ScopeEnd(_) => TraceEvent::ScopeEnd { marker },
        MarkerKind::PassiveEntityCreation(_) => {
            TraceEvent::PassiveEntityCreation { marker, entity_id: r.u64()?, location: r.location()? }
        }
        MarkerKind::SendOperation(_) => {
            TraceEvent::SendOperation { marker, entity_id: r.u64()?, target_id: r.u64()? }
        }
        MarkerKind::ReceiveOperation(_) => TraceEvent::ReceiveOperation { marker, source_id: r.u64()? },
    })
}

/// Decodes a complete stream into `(emitting activity, event)` pairs.
/// Context records are consumed, not returned.
pub fn decode_trace_stream(
    bytes: &[u8],
    catalog: &MetaDataCatalog,
) -> Result<Vec<(u64, TraceEvent)>, TraceDecodeError> {
    TraceDecoder::new(catalog).decode(bytes)
}

/// Encodes events attributed to activities, inserting a context record
/// whenever the emitting activity changes.
pub fn encode_attributed(events: &[(u64, TraceEvent)]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut current = None;
    for (activity, event) in events {
        if current != Some(*activity) {
            TraceEvent::ActivityContext { activity_id: *activity }.encode_into(&mut out);
            current = Some(*activity);
        }
        event.encode_into(&mut out);
    }
    out
}

//! Wire layer for a concurrency-agnostic debugger.
//!
//! The runtime describes itself with a [`MetaDataCatalog`]: which activity,
//! scope and passive-entity types exist, which trace marker bytes they use,
//! and which breakpoint and stepping types are available where. A debugger
//! client only ever compares names and tags for equality and decodes the
//! binary trace through the catalog's marker table, so it needs no knowledge
//! of any particular concurrency model.
//!
//! Two channels carry the protocol:
//!
//! - a text channel of JSON [`ControlMessage`]s (meta data, sources,
//!   breakpoints, suspensions, stepping, symbols, stack/variables),
//! - a binary channel of [`TraceEvent`] records.

pub mod applicability;
pub mod catalog;
pub mod control;
pub mod location;
pub mod symbols;
pub mod tags;
pub mod trace;

pub use applicability::{applicable_breakpoints, applicable_stepping_ops};
pub use catalog::{build_shipped_catalog, CatalogError, MetaDataCatalog};
pub use control::{ControlMessage, MalformedMessage};
pub use location::{SourceLocation, TaggedLocation};
pub use symbols::{Symbol, SymbolId, SymbolTable};
pub use tags::Tag;
pub use trace::{TraceDecodeError, TraceDecoder, TraceEvent};

#[cfg(feature = "strategies")]
pub mod strategies;

//! JSON control messages exchanged on the text channel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::MetaDataCatalog;
use crate::location::{SourceLocation, TaggedLocation};
use crate::symbols::{Symbol, SymbolId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BreakpointSpec {
    #[serde(rename = "type")]
    pub breakpoint_type: String,
    pub location: SourceLocation,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActiveScope {
    pub scope_type: String,
    pub scope_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StackFrame {
    pub method_name_symbol: SymbolId,
    pub location: SourceLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub value: String,
}

/// Every message on the control channel. Serialized as a JSON object whose
/// `"type"` field names the variant in kebab-case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", rename_all_fields = "camelCase")]
pub enum ControlMessage {
    Metadata {
        catalog: MetaDataCatalog,
    },
    Source {
        uri: String,
        file_symbol: SymbolId,
        text: String,
        locations: Vec<TaggedLocation>,
    },
    BreakpointUpdate {
        breakpoint: BreakpointSpec,
    },
    Stopped {
        activity_id: u64,
        activity_type: String,
        location: SourceLocation,
        /// Innermost scope last.
        scopes: Vec<ActiveScope>,
    },
    Step {
        activity_id: u64,
        step: String,
    },
    Symbols {
        symbols: Vec<Symbol>,
    },
    Launch,
    StackTraceRequest {
        activity_id: u64,
    },
    StackTraceResponse {
        activity_id: u64,
        frames: Vec<StackFrame>,
    },
    VariablesRequest {
        activity_id: u64,
        frame_index: u32,
    },
    VariablesResponse {
        activity_id: u64,
        frame_index: u32,
        variables: Vec<Variable>,
    },
    ProgramExit {
        status: i32,
    },
    /// Runtime errors and rejected requests.
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activity_id: Option<u64>,
        message: String,
    },
}

#[derive(Debug, Error)]
#[error("malformed control message: {0}")]
pub struct MalformedMessage(#[from] serde_json::Error);

impl ControlMessage {
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("control messages always serialize")
    }

    pub fn decode(text: &str) -> Result<Self, MalformedMessage> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn decode_bytes(bytes: &[u8]) -> Result<Self, MalformedMessage> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// The kebab-case `"type"` value.
    pub fn kind(&self) -> &'static str {
        match self {
            ControlMessage::Metadata { .. } => "metadata",
            ControlMessage::Source { .. } => "source",
            ControlMessage::BreakpointUpdate { .. } => "breakpoint-update",
            ControlMessage::Stopped { .. } => "stopped",
            ControlMessage::Step { .. } => "step",
            ControlMessage::Symbols { .. } => "symbols",
            ControlMessage::Launch => "launch",
            ControlMessage::StackTraceRequest { .. } => "stack-trace-request",
            ControlMessage::StackTraceResponse { .. } => "stack-trace-response",
            ControlMessage::VariablesRequest { .. } => "variables-request",
            ControlMessage::VariablesResponse { .. } => "variables-response",
            ControlMessage::ProgramExit { .. } => "program-exit",
            ControlMessage::Error { .. } => "error",
        }
    }
}

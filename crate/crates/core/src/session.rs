//! One debuggable program: parsed source, tag table, debugger and the
//! runtime that executes it once launched.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use polydbg_protocol::{ControlMessage, MetaDataCatalog, SymbolId, SymbolTable};

use crate::debug::{Debugger, TraceHub, TraceSink};
use crate::minilang::{self, ParseError, Program, SourceUnit};
use crate::runtime::{RunConfig, RunOutcome, Runtime};

pub struct Session {
    source: SourceUnit,
    program: Arc<Program>,
    catalog: Arc<MetaDataCatalog>,
    file_symbol: SymbolId,
    debugger: Arc<Debugger>,
    launched: AtomicBool,
}

impl Session {
    pub fn new(source: SourceUnit, catalog: Arc<MetaDataCatalog>, sink: Box<dyn TraceSink>) -> Result<Self, ParseError> {
        let program = Arc::new(minilang::parse(&source.text)?);
        let symbols = Arc::new(SymbolTable::new());
        let file_symbol = symbols.intern(&source.uri);
        let tags: HashMap<_, _> = minilang::tag_table(&program)
            .into_iter()
            .map(|(span, tags)| (span, tags.iter().map(|t| t.as_str().to_string()).collect()))
            .collect();
        let trace = Arc::new(TraceHub::new(sink));
        let debugger = Arc::new(Debugger::new(catalog.clone(), file_symbol, tags, symbols, trace));
        Ok(Self { source, program, catalog, file_symbol, debugger, launched: AtomicBool::new(false) })
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn debugger(&self) -> &Arc<Debugger> {
        &self.debugger
    }

    pub fn file_symbol(&self) -> SymbolId {
        self.file_symbol
    }

    pub fn metadata_message(&self) -> ControlMessage {
        ControlMessage::Metadata { catalog: (*self.catalog).clone() }
    }

    pub fn source_message(&self) -> ControlMessage {
        ControlMessage::Source {
            uri: self.source.uri.clone(),
            file_symbol: self.file_symbol,
            text: self.source.text.clone(),
            locations: minilang::collect_tagged_locations(&self.program, self.file_symbol),
        }
    }

    /// Every symbol interned so far, marking them as sent.
    pub fn initial_symbols(&self) -> ControlMessage {
        let symbols = self.debugger.symbols();
        symbols.take_unsent();
        ControlMessage::Symbols { symbols: symbols.snapshot() }
    }

    /// Starts execution on a background thread. `None` if the program was
    /// already launched.
    pub fn launch(&self, config: RunConfig) -> Option<JoinHandle<RunOutcome>> {
        if self.launched.swap(true, Ordering::SeqCst) {
            return None;
        }
        let rt = Runtime::new(self.program.clone(), self.debugger.clone(), config);
        Some(thread::Builder::new().name("runtime".into()).spawn(move || rt.run()).expect("spawn runtime"))
    }

    /// Launches and waits for the program to exit.
    pub fn run(&self, config: RunConfig) -> RunOutcome {
        self.launch(config).expect("session already launched").join().expect("runtime panicked")
    }
}

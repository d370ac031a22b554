mod dump;
mod tracefile;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use polydbg_core::debug::{NullSink, SharedBuffer, TraceSink};
use polydbg_core::minilang::SourceUnit;
use polydbg_core::runtime::{RunConfig, RunOutcome};
use polydbg_core::Session;
use polydbg_protocol::trace::decode_trace_stream;
use polydbg_protocol::{build_shipped_catalog, MetaDataCatalog};
use polydbg_server::{Server, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "polydbg", version, about = "Run and debug concurrent programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program, by default waiting for a debugger to connect.
    Run {
        file: PathBuf,
        /// Port for the debugger's WebSocket endpoints.
        #[arg(long, default_value_t = DEFAULT_PORT, conflicts_with = "headless")]
        port: u16,
        /// Run without a debugger.
        #[arg(long)]
        headless: bool,
        /// Write a self-describing trace file (headless runs only).
        #[arg(long, requires = "headless")]
        trace_out: Option<PathBuf>,
        /// Do not suspend main before its first statement.
        #[arg(long)]
        no_pause: bool,
    },
    /// Inspect recorded traces.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Print the tagged source locations of a program.
    Tags { file: PathBuf },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Decode a trace file.
    Dump {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

const EXIT_INPUT: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, port, headless, trace_out, no_pause } => {
            let Some(source) = load(&file) else { return ExitCode::from(EXIT_INPUT) };
            let catalog = Arc::new(build_shipped_catalog());
            if headless {
                run_headless(source, catalog, trace_out.as_deref())
            } else {
                run_debug(source, catalog, port, !no_pause)
            }
        }
        Command::Trace { command: TraceCommand::Dump { path, format } } => dump(&path, format),
        Command::Tags { file } => tags(&file),
    }
}

fn load(file: &Path) -> Option<SourceUnit> {
    match std::fs::read_to_string(file) {
        Ok(text) => Some(SourceUnit::new(file.display().to_string(), text)),
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            None
        }
    }
}

fn exit_for(outcome: &RunOutcome) -> ExitCode {
    for e in &outcome.errors {
        eprintln!("runtime error: {e}");
    }
    ExitCode::from(outcome.status as u8)
}

fn run_headless(source: SourceUnit, catalog: Arc<MetaDataCatalog>, trace_out: Option<&Path>) -> ExitCode {
    let buffer = SharedBuffer::new();
    let sink: Box<dyn TraceSink> = match trace_out {
        Some(_) => Box::new(buffer.clone()),
        None => Box::new(NullSink),
    };
    let uri = source.uri.clone();
    let session = match Session::new(source, catalog.clone(), sink) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{uri}:{e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let outcome = session.run(RunConfig { echo: true, pause_on_entry: false });
    if let Some(path) = trace_out {
        let header = tracefile::TraceHeader {
            catalog: (*catalog).clone(),
            symbols: session.debugger().symbols().snapshot(),
        };
        if let Err(e) = tracefile::write(path, &header, &buffer.bytes()) {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_INPUT);
        }
    }
    exit_for(&outcome)
}

fn run_debug(source: SourceUnit, catalog: Arc<MetaDataCatalog>, port: u16, pause: bool) -> ExitCode {
    if let Err(e) = polydbg_core::minilang::parse(&source.text) {
        eprintln!("{}:{e}", source.uri);
        return ExitCode::from(EXIT_INPUT);
    }
    let server = match Server::bind(("127.0.0.1", port)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot listen on port {port}: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match server.local_addr() {
        Ok(addr) => eprintln!("waiting for a debugger on ws://{addr}/control"),
        Err(e) => eprintln!("listening ({e})"),
    }
    match server.serve(source, catalog, RunConfig { echo: true, pause_on_entry: pause }) {
        Ok(outcome) => exit_for(&outcome),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn dump(path: &Path, format: Format) -> ExitCode {
    let (header, stream, offset) = match tracefile::read(path) {
        Ok(parts) => parts,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let events = match decode_trace_stream(&stream, &header.catalog) {
        Ok(events) => events,
        Err(e) => {
            eprintln!("{}: byte {}: {e}", path.display(), offset + e.offset());
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let d = dump::Dump::new(&header);
    match format {
        Format::Text => out(&d.text(&events)),
        Format::Json => out(&format!("{:#}\n", d.json(&events))),
        Format::Dot => out(&d.dot(&events)),
    }
    ExitCode::SUCCESS
}

fn tags(file: &Path) -> ExitCode {
    let Some(source) = load(file) else { return ExitCode::from(EXIT_INPUT) };
    let program = match polydbg_core::minilang::parse(&source.text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}:{e}", source.uri);
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let lines: Vec<&str> = source.text.split('\n').collect();
    let mut table = String::new();
    for (span, tags) in polydbg_core::minilang::tag_table(&program) {
        let text: String = lines
            .get(span.line as usize - 1)
            .map(|l| l.chars().skip(span.col as usize - 1).take(span.len as usize).collect())
            .unwrap_or_default();
        let names: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
        table.push_str(&format!("{}:{}:{}\t{}\t{text}\n", span.line, span.col, span.len, names.join(",")));
    }
    out(&table);
    ExitCode::SUCCESS
}

/// Writes to stdout, ignoring a closed pipe (`| head`).
fn out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

//! Renderings of a decoded trace.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use polydbg_protocol::catalog::MarkerKind;
use polydbg_protocol::{MetaDataCatalog, SourceLocation, TraceEvent};
use serde_json::{json, Value};

use crate::tracefile::TraceHeader;

pub struct Dump<'a> {
    catalog: &'a MetaDataCatalog,
    symbols: HashMap<u16, &'a str>,
    kinds: [Option<MarkerKind>; 256],
}

impl<'a> Dump<'a> {
    pub fn new(header: &'a TraceHeader) -> Self {
        Self {
            catalog: &header.catalog,
            symbols: header.symbols.iter().map(|s| (s.id.0, s.text.as_str())).collect(),
            kinds: header.catalog.marker_table(),
        }
    }

    fn symbol(&self, id: u16) -> String {
        self.symbols.get(&id).map_or_else(|| format!("<symbol {id}>"), |s| s.to_string())
    }

    fn location(&self, l: &SourceLocation) -> String {
        format!("{}:{}:{}", self.symbol(l.file_symbol.0), l.line, l.column)
    }

    fn label(&self, marker: u8) -> &str {
        let c = self.catalog;
        match self.kinds[marker as usize] {
            Some(MarkerKind::ActivityCreation(i) | MarkerKind::ActivityCompletion(i)) => &c.activity_types[i].label,
            Some(MarkerKind::ScopeStart(i) | MarkerKind::ScopeEnd(i)) => &c.dynamic_scope_types[i].label,
            Some(MarkerKind::PassiveEntityCreation(i)) => &c.passive_entity_types[i].label,
            Some(MarkerKind::SendOperation(i)) => &c.send_op_types[i].label,
            Some(MarkerKind::ReceiveOperation(i)) => &c.receive_op_types[i].label,
            None => "?",
        }
    }

    pub fn text(&self, events: &[(u64, TraceEvent)]) -> String {
        let mut out = String::new();
        for (activity, event) in events {
            let label = self.label(event.marker());
            let line = match event {
                TraceEvent::ActivityContext { .. } => continue,
                TraceEvent::ActivityCreation { activity_id, name, location, .. } => {
                    format!("create {label} {activity_id} {} at {}", self.symbol(name.0), self.location(location))
                }
                TraceEvent::ActivityCompletion { .. } => format!("complete {label}"),
                TraceEvent::ScopeStart { scope_id, location, .. } => {
                    format!("start {label} {scope_id} at {}", self.location(location))
                }
                TraceEvent::ScopeEnd { .. } => format!("end {label}"),
                TraceEvent::PassiveEntityCreation { entity_id, location, .. } => {
                    format!("create {label} {entity_id} at {}", self.location(location))
                }
                TraceEvent::SendOperation { entity_id, target_id, .. } => {
                    format!("send {label} {entity_id} -> {target_id}")
                }
                TraceEvent::ReceiveOperation { source_id, .. } => format!("receive {label} <- {source_id}"),
            };
            let _ = writeln!(out, "[{activity}] {line}");
        }
        out
    }

    fn location_json(&self, l: &SourceLocation) -> Value {
        json!({ "file": self.symbol(l.file_symbol.0), "line": l.line, "column": l.column, "length": l.length })
    }

    pub fn json(&self, events: &[(u64, TraceEvent)]) -> Value {
        let items = events
            .iter()
            .filter(|(_, e)| !matches!(e, TraceEvent::ActivityContext { .. }))
            .map(|(activity, event)| {
                let label = self.label(event.marker());
                let mut v = match event {
                    TraceEvent::ActivityContext { .. } => unreachable!("filtered"),
                    TraceEvent::ActivityCreation { activity_id, name, location, .. } => json!({
                        "event": "activity-creation", "id": activity_id,
                        "name": self.symbol(name.0), "location": self.location_json(location),
                    }),
                    TraceEvent::ActivityCompletion { .. } => json!({ "event": "activity-completion" }),
                    TraceEvent::ScopeStart { scope_id, location, .. } => json!({
                        "event": "scope-start", "id": scope_id, "location": self.location_json(location),
                    }),
                    TraceEvent::ScopeEnd { .. } => json!({ "event": "scope-end" }),
                    TraceEvent::PassiveEntityCreation { entity_id, location, .. } => json!({
                        "event": "passive-entity-creation", "id": entity_id, "location": self.location_json(location),
                    }),
                    TraceEvent::SendOperation { entity_id, target_id, .. } => json!({
                        "event": "send-operation", "entity": entity_id, "target": target_id,
                    }),
                    TraceEvent::ReceiveOperation { source_id, .. } => json!({
                        "event": "receive-operation", "source": source_id,
                    }),
                };
                v["activity"] = json!(activity);
                v["type"] = json!(label);
                v
            })
            .collect();
        Value::Array(items)
    }

    /// Interaction graph: boxes for activities, ellipses for passive
    /// entities, dashed gray creation edges and solid operation edges.
    pub fn dot(&self, events: &[(u64, TraceEvent)]) -> String {
        let mut nodes: BTreeMap<String, String> = BTreeMap::new();
        let mut creations: Vec<(String, String)> = Vec::new();
        let mut ops: BTreeMap<(String, String, String), usize> = BTreeMap::new();
        let mut activities: HashMap<u64, ()> = HashMap::new();
        let mut entities: HashMap<u64, ()> = HashMap::new();
        for (activity, event) in events {
            if let TraceEvent::ActivityCreation { activity_id, name, .. } = event {
                activities.insert(*activity_id, ());
                let label = format!("{} {activity_id}\\n{}", self.label(event.marker()), escape(&self.symbol(name.0)));
                nodes.insert(format!("a{activity_id}"), format!("shape=box, label=\"{label}\""));
                if activity_id != activity {
                    creations.push((format!("a{activity}"), format!("a{activity_id}")));
                }
            }
            if let TraceEvent::PassiveEntityCreation { entity_id, .. } = event {
                entities.insert(*entity_id, ());
                let label = format!("{} {entity_id}", self.label(event.marker()));
                nodes.insert(format!("e{entity_id}"), format!("shape=ellipse, label=\"{label}\""));
                creations.push((format!("a{activity}"), format!("e{entity_id}")));
            }
        }
        let node = |id: u64| {
            if activities.contains_key(&id) {
                Some(format!("a{id}"))
            } else if entities.contains_key(&id) {
                Some(format!("e{id}"))
            } else {
                None
            }
        };
        for (activity, event) in events {
            let label = self.label(event.marker()).to_string();
            let edge = match event {
                TraceEvent::SendOperation { target_id, .. } => node(*target_id).map(|t| (format!("a{activity}"), t)),
                TraceEvent::ReceiveOperation { source_id, .. } => node(*source_id).map(|s| (s, format!("a{activity}"))),
                _ => None,
            };
            if let Some((from, to)) = edge {
                *ops.entry((from, to, label)).or_default() += 1;
            }
        }
        let mut out = String::from("digraph trace {\n");
        for (id, attrs) in &nodes {
            let _ = writeln!(out, "  {id} [{attrs}];");
        }
        for (from, to) in &creations {
            let _ = writeln!(out, "  {from} -> {to} [style=dashed, color=gray];");
        }
        for ((from, to, label), n) in &ops {
            let text = if *n > 1 { format!("{label} x{n}") } else { label.clone() };
            let _ = writeln!(out, "  {from} -> {to} [label=\"{text}\"];");
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

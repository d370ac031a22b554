//! proptest strategies for protocol values, shared by test suites.

use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::sample::{select, subsequence};

use crate::catalog::{
    ActivityType, BreakpointType, DynamicScopeType, MarkerKind, MetaDataCatalog, PassiveEntityType,
    ReceiveOpType, SendOpType, SteppingType,
};
use crate::control::{ActiveScope, BreakpointSpec, ControlMessage, StackFrame, Variable};
use crate::location::{SourceLocation, TaggedLocation};
use crate::symbols::{Symbol, SymbolId};
use crate::tags::Tag;
use crate::trace::TraceEvent;

pub fn location() -> impl Strategy<Value = SourceLocation> {
    (any::<u16>(), 1..=u32::MAX, 1..=u16::MAX, 1..=u16::MAX)
        .prop_map(|(f, line, column, length)| SourceLocation::new(SymbolId(f), line, column, length))
}

fn label() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 .-]{0,15}"
}

fn tags() -> impl Strategy<Value = Vec<String>> {
    subsequence(Tag::ALL.to_vec(), 0..3).prop_map(|t| t.iter().map(|t| t.as_str().to_string()).collect())
}

/// A valid catalog of random shape: distinct markers (never 0x01), distinct
/// entity type ids, distinct breakpoint and stepping names.
pub fn catalog() -> impl Strategy<Value = MetaDataCatalog> {
    (1usize..6, 1usize..5, 1usize..4, 1usize..6, 1usize..6, 0usize..8, 0usize..8)
        .prop_flat_map(|(na, np, ns, nsend, nrecv, nbp, nstep)| {
            let markers_needed = 2 * na + np + 2 * ns + nsend + nrecv;
            let pool: Vec<u8> = (0u8..=255).filter(|m| *m != 0x01).collect();
            (
                Just((na, np, ns, nsend, nrecv)),
                proptest::sample::subsequence(pool, markers_needed).prop_shuffle(),
                vec((label(), label()), na + np + ns),
                vec((label(), any::<prop::sample::Index>(), any::<prop::sample::Index>()), nsend),
                vec((label(), any::<prop::sample::Index>()), nrecv),
                vec((label(), tags()), nbp),
                vec((label(), tags(), any::<bool>(), any::<bool>(), any::<prop::sample::Index>()), nstep),
            )
        })
        .prop_map(|((na, np, ns, _, _), markers, labels, sends, recvs, bps, steps)| {
            let mut markers = markers.into_iter();
            let mut labels = labels.into_iter();
            let mut next_id = 1u16;
            let mut id = || {
                next_id += 1;
                next_id
            };
            let activity_types: Vec<_> = (0..na)
                .map(|_| {
                    let (label, icon) = labels.next().unwrap();
                    ActivityType {
                        id: id(),
                        label,
                        creation_marker: markers.next().unwrap(),
                        completion_marker: markers.next().unwrap(),
                        icon,
                    }
                })
                .collect();
            let passive_entity_types: Vec<_> = (0..np)
                .map(|_| PassiveEntityType {
                    id: id(),
                    label: labels.next().unwrap().0,
                    creation_marker: markers.next().unwrap(),
                })
                .collect();
            let dynamic_scope_types: Vec<_> = (0..ns)
                .map(|_| DynamicScopeType {
                    id: id(),
                    label: labels.next().unwrap().0,
                    start_marker: markers.next().unwrap(),
                    end_marker: markers.next().unwrap(),
                })
                .collect();
            let all_ids: Vec<u16> = activity_types
                .iter()
                .map(|a| a.id)
                .chain(passive_entity_types.iter().map(|p| p.id))
                .chain(dynamic_scope_types.iter().map(|s| s.id))
                .collect();
            let send_op_types = sends
                .into_iter()
                .map(|(label, e, t)| SendOpType {
                    marker: markers.next().unwrap(),
                    label,
                    entity_type_id: *e.get(&all_ids),
                    target_type_id: *t.get(&all_ids),
                })
                .collect();
            let receive_op_types = recvs
                .into_iter()
                .map(|(label, s)| ReceiveOpType {
                    marker: markers.next().unwrap(),
                    label,
                    source_type_id: *s.get(&all_ids),
                })
                .collect();
            let breakpoint_types = bps
                .into_iter()
                .enumerate()
                .map(|(i, (label, applicable_tags))| BreakpointType {
                    name: format!("bp-{i}"),
                    label,
                    applicable_tags,
                })
                .collect();
            let stepping_types = steps
                .into_iter()
                .enumerate()
                .map(|(i, (label, applicable_tags, with_activity, with_scope, pick))| SteppingType {
                    name: format!("step-{i}"),
                    label,
                    applicable_tags,
                    applicable_activity_type_ids: if with_activity {
                        vec![pick.get(&activity_types).id]
                    } else {
                        vec![]
                    },
                    applicable_scope_type_ids: if with_scope {
                        vec![pick.get(&dynamic_scope_types).id]
                    } else {
                        vec![]
                    },
                })
                .collect();
            MetaDataCatalog {
                activity_types,
                passive_entity_types,
                dynamic_scope_types,
                send_op_types,
                receive_op_types,
                breakpoint_types,
                stepping_types,
            }
        })
}

/// Any event whose marker is defined by `catalog`, or a context record.
pub fn trace_event(catalog: &MetaDataCatalog) -> impl Strategy<Value = TraceEvent> {
    let markers: Vec<(u8, MarkerKind)> = catalog.markers().collect();
    prop_oneof![
        1 => any::<u64>().prop_map(|activity_id| TraceEvent::ActivityContext { activity_id }),
        8 => (select(markers), any::<u64>(), any::<u64>(), any::<u16>(), location()).prop_map(
            |((marker, kind), a, b, name, location)| match kind {
                MarkerKind::ActivityCreation(_) => {
                    TraceEvent::ActivityCreation { marker, activity_id: a, name: SymbolId(name), location }
                }
                MarkerKind::ActivityCompletion(_) => TraceEvent::ActivityCompletion { marker },
                MarkerKind::ScopeStart(_) => TraceEvent::ScopeStart { marker, scope_id: a, location },
                MarkerKind::ScopeEnd(_) => TraceEvent::ScopeEnd { marker },
                MarkerKind::PassiveEntityCreation(_) => {
                    TraceEvent::PassiveEntityCreation { marker, entity_id: a, location }
                }
                MarkerKind::SendOperation(_) => TraceEvent::SendOperation { marker, entity_id: a, target_id: b },
                MarkerKind::ReceiveOperation(_) => TraceEvent::ReceiveOperation { marker, source_id: a },
            }
        ),
    ]
}

fn text() -> impl Strategy<Value = String> {
    "\\PC{0,40}"
}

pub fn control_message() -> impl Strategy<Value = ControlMessage> {
    prop_oneof![
        catalog().prop_map(|catalog| ControlMessage::Metadata { catalog }),
        (text(), any::<u16>(), text(), vec((location(), tags()), 0..5)).prop_map(|(uri, f, text, locs)| {
            ControlMessage::Source {
                uri,
                file_symbol: SymbolId(f),
                text,
                locations: locs.into_iter().map(|(location, tags)| TaggedLocation { location, tags }).collect(),
            }
        }),
        (label(), location(), any::<bool>()).prop_map(|(breakpoint_type, location, enabled)| {
            ControlMessage::BreakpointUpdate { breakpoint: BreakpointSpec { breakpoint_type, location, enabled } }
        }),
        (any::<u64>(), label(), location(), vec((label(), any::<u64>()), 0..4)).prop_map(
            |(activity_id, activity_type, location, scopes)| ControlMessage::Stopped {
                activity_id,
                activity_type,
                location,
                scopes: scopes
                    .into_iter()
                    .map(|(scope_type, scope_id)| ActiveScope { scope_type, scope_id })
                    .collect(),
            }
        ),
        (any::<u64>(), label()).prop_map(|(activity_id, step)| ControlMessage::Step { activity_id, step }),
        proptest::collection::btree_map(any::<u16>(), text(), 0..6).prop_map(|m: BTreeMap<u16, String>| {
            ControlMessage::Symbols {
                symbols: m.into_iter().map(|(id, text)| Symbol { id: SymbolId(id), text }).collect(),
            }
        }),
        Just(ControlMessage::Launch),
        any::<u64>().prop_map(|activity_id| ControlMessage::StackTraceRequest { activity_id }),
        (any::<u64>(), vec((any::<u16>(), location()), 0..4)).prop_map(|(activity_id, frames)| {
            ControlMessage::StackTraceResponse {
                activity_id,
                frames: frames
                    .into_iter()
                    .map(|(s, location)| StackFrame { method_name_symbol: SymbolId(s), location })
                    .collect(),
            }
        }),
        (any::<u64>(), any::<u32>())
            .prop_map(|(activity_id, frame_index)| ControlMessage::VariablesRequest { activity_id, frame_index }),
        (any::<u64>(), any::<u32>(), vec((label(), text()), 0..4)).prop_map(|(activity_id, frame_index, vars)| {
            ControlMessage::VariablesResponse {
                activity_id,
                frame_index,
                variables: vars.into_iter().map(|(name, value)| Variable { name, value }).collect(),
            }
        }),
        any::<i32>().prop_map(|status| ControlMessage::ProgramExit { status }),
        (proptest::option::of(any::<u64>()), text())
            .prop_map(|(activity_id, message)| ControlMessage::Error { activity_id, message }),
    ]
}

/// `catalog` with its marker bytes permuted by `perm` (a map over 0..=255
/// that must fix 0x01), plus the mapping as a table.
pub fn permute_markers(catalog: &MetaDataCatalog, perm: &[u8; 256]) -> MetaDataCatalog {
    let p = |m: u8| perm[m as usize];
    let mut out = catalog.clone();
    for a in &mut out.activity_types {
        a.creation_marker = p(a.creation_marker);
        a.completion_marker = p(a.completion_marker);
    }
    for s in &mut out.dynamic_scope_types {
        s.start_marker = p(s.start_marker);
        s.end_marker = p(s.end_marker);
    }
    for e in &mut out.passive_entity_types {
        e.creation_marker = p(e.creation_marker);
    }
    for s in &mut out.send_op_types {
        s.marker = p(s.marker);
    }
    for r in &mut out.receive_op_types {
        r.marker = p(r.marker);
    }
    out
}

/// A random permutation of all byte values that keeps 0x01 in place.
pub fn marker_permutation() -> impl Strategy<Value = [u8; 256]> {
    let others: Vec<u8> = (0u8..=255).filter(|m| *m != 0x01).collect();
    Just(others.clone()).prop_shuffle().prop_map(move |shuffled| {
        let mut perm = [0u8; 256];
        perm[0x01] = 0x01;
        for (from, to) in others.iter().zip(shuffled) {
            perm[*from as usize] = to;
        }
        perm
    })
}

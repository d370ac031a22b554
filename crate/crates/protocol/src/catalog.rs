//! The meta-data catalog: the runtime's self-description.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tags::Tag;
use crate::trace::ACTIVITY_CONTEXT_MARKER;

pub type EntityTypeId = u16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActivityType {
    pub id: EntityTypeId,
    pub label: String,
    pub creation_marker: u8,
    pub completion_marker: u8,
    pub icon: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PassiveEntityType {
    pub id: EntityTypeId,
    pub label: String,
    pub creation_marker: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DynamicScopeType {
    pub id: EntityTypeId,
    pub label: String,
    pub start_marker: u8,
    pub end_marker: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SendOpType {
    pub marker: u8,
    pub label: String,
    pub entity_type_id: EntityTypeId,
    pub target_type_id: EntityTypeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReceiveOpType {
    pub marker: u8,
    pub label: String,
    pub source_type_id: EntityTypeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BreakpointType {
    pub name: String,
    pub label: String,
    pub applicable_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SteppingType {
    pub name: String,
    pub label: String,
    pub applicable_tags: Vec<String>,
    pub applicable_activity_type_ids: Vec<EntityTypeId>,
    pub applicable_scope_type_ids: Vec<EntityTypeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetaDataCatalog {
    pub activity_types: Vec<ActivityType>,
    pub passive_entity_types: Vec<PassiveEntityType>,
    pub dynamic_scope_types: Vec<DynamicScopeType>,
    pub send_op_types: Vec<SendOpType>,
    pub receive_op_types: Vec<ReceiveOpType>,
    pub breakpoint_types: Vec<BreakpointType>,
    pub stepping_types: Vec<SteppingType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("marker byte {0:#04x} is used more than once")]
    DuplicateMarker(u8),
    #[error("marker byte {0:#04x} is reserved for activity context records")]
    ReservedMarker(u8),
    #[error("entity type id {0} is used more than once")]
    DuplicateEntityTypeId(EntityTypeId),
    #[error("`{0}` refers to unknown entity type id {1}")]
    UnknownEntityType(String, EntityTypeId),
    #[error("breakpoint type `{0}` is defined more than once")]
    DuplicateBreakpointName(String),
    #[error("stepping type `{0}` is defined more than once")]
    DuplicateSteppingName(String),
    #[error("`{0}` refers to unknown source tag `{1}`")]
    UnknownTag(String, String),
}

/// What a marker byte introduces, with the index of its catalog entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerKind {
    ActivityCreation(usize),
    ActivityCompletion(usize),
    ScopeStart(usize),
    ScopeEnd(usize),
    PassiveEntityCreation(usize),
    SendOperation(usize),
    ReceiveOperation(usize),
}

impl MetaDataCatalog {
    /// Checks marker uniqueness, entity-type ids and name uniqueness.
    pub fn validate(&self) -> Result<(), CatalogError> {
        let mut markers = HashSet::new();
        for marker in self.markers().map(|(m, _)| m) {
            if marker == ACTIVITY_CONTEXT_MARKER {
                return Err(CatalogError::ReservedMarker(marker));
            }
            if !markers.insert(marker) {
                return Err(CatalogError::DuplicateMarker(marker));
            }
        }

        let mut ids = HashSet::new();
        for id in self.entity_type_ids() {
            if !ids.insert(id) {
                return Err(CatalogError::DuplicateEntityTypeId(id));
            }
        }
        let check = |owner: &str, id: EntityTypeId| {
            if ids.contains(&id) {
                Ok(())
            } else {
                Err(CatalogError::UnknownEntityType(owner.to_string(), id))
            }
        };
        for op in &self.send_op_types {
            check(&op.label, op.entity_type_id)?;
            check(&op.label, op.target_type_id)?;
        }
        for op in &self.receive_op_types {
            check(&op.label, op.source_type_id)?;
        }
        for st in &self.stepping_types {
            for id in &st.applicable_activity_type_ids {
                if !self.activity_types.iter().any(|a| a.id == *id) {
                    return Err(CatalogError::UnknownEntityType(st.name.clone(), *id));
                }
            }
            for id in &st.applicable_scope_type_ids {
                if !self.dynamic_scope_types.iter().any(|s| s.id == *id) {
                    return Err(CatalogError::UnknownEntityType(st.name.clone(), *id));
                }
            }
        }

        let mut names = HashSet::new();
        for bp in &self.breakpoint_types {
            if !names.insert(bp.name.as_str()) {
                return Err(CatalogError::DuplicateBreakpointName(bp.name.clone()));
            }
        }
        let mut names = HashSet::new();
        for st in &self.stepping_types {
            if !names.insert(st.name.as_str()) {
                return Err(CatalogError::DuplicateSteppingName(st.name.clone()));
            }
        }
        Ok(())
    }

    /// Checks that every tag the catalog mentions belongs to `vocabulary`.
    pub fn validate_tags<S: AsRef<str>>(&self, vocabulary: &[S]) -> Result<(), CatalogError> {
        let known: HashSet<&str> = vocabulary.iter().map(|s| s.as_ref()).collect();
        let bp = self.breakpoint_types.iter().map(|b| (&b.name, &b.applicable_tags));
        let st = self.stepping_types.iter().map(|s| (&s.name, &s.applicable_tags));
        for (owner, tags) in bp.chain(st) {
            if let Some(tag) = tags.iter().find(|t| !known.contains(t.as_str())) {
                return Err(CatalogError::UnknownTag(owner.clone(), tag.clone()));
            }
        }
        Ok(())
    }

    /// Every marker byte in the catalog with what it introduces.
    pub fn markers(&self) -> impl Iterator<Item = (u8, MarkerKind)> + '_ {
        let act = self.activity_types.iter().enumerate().flat_map(|(i, a)| {
            [
                (a.creation_marker, MarkerKind::ActivityCreation(i)),
                (a.completion_marker, MarkerKind::ActivityCompletion(i)),
            ]
        });
        let scopes = self.dynamic_scope_types.iter().enumerate().flat_map(|(i, s)| {
            [(s.start_marker, MarkerKind::ScopeStart(i)), (s.end_marker, MarkerKind::ScopeEnd(i))]
        });
        let passive = self
            .passive_entity_types
            .iter()
            .enumerate()
            .map(|(i, p)| (p.creation_marker, MarkerKind::PassiveEntityCreation(i)));
        let sends = self
            .send_op_types
            .iter()
            .enumerate()
            .map(|(i, s)| (s.marker, MarkerKind::SendOperation(i)));
        let receives = self
            .receive_op_types
            .iter()
            .enumerate()
            .map(|(i, r)| (r.marker, MarkerKind::ReceiveOperation(i)));
        act.chain(scopes).chain(passive).chain(sends).chain(receives)
    }

    /// Lookup table from marker byte to record kind.
    pub fn marker_table(&self) -> [Option<MarkerKind>; 256] {
        let mut table = [None; 256];
        for (marker, kind) in self.markers() {
            table[marker as usize] = Some(kind);
        }
        table
    }

    fn entity_type_ids(&self) -> impl Iterator<Item = EntityTypeId> + '_ {
        self.activity_types
            .iter()
            .map(|a| a.id)
            .chain(self.passive_entity_types.iter().map(|p| p.id))
            .chain(self.dynamic_scope_types.iter().map(|s| s.id))
    }

    pub fn activity_type(&self, label: &str) -> Option<&ActivityType> {
        self.activity_types.iter().find(|a| a.label == label)
    }

    pub fn scope_type(&self, label: &str) -> Option<&DynamicScopeType> {
        self.dynamic_scope_types.iter().find(|s| s.label == label)
    }

    pub fn passive_entity_type(&self, label: &str) -> Option<&PassiveEntityType> {
        self.passive_entity_types.iter().find(|p| p.label == label)
    }

    pub fn send_op(&self, label: &str) -> Option<&SendOpType> {
        self.send_op_types.iter().find(|s| s.label == label)
    }

    pub fn receive_op(&self, label: &str) -> Option<&ReceiveOpType> {
        self.receive_op_types.iter().find(|r| r.label == label)
    }

    pub fn breakpoint_type(&self, name: &str) -> Option<&BreakpointType> {
        self.breakpoint_types.iter().find(|b| b.name == name)
    }

    pub fn stepping_type(&self, name: &str) -> Option<&SteppingType> {
        self.stepping_types.iter().find(|s| s.name == name)
    }

    /// Label of the activity, scope or passive entity type with id `id`.
    pub fn entity_type_label(&self, id: EntityTypeId) -> Option<&str> {
        self.activity_types
            .iter()
            .find(|a| a.id == id)
            .map(|a| a.label.as_str())
            .or_else(|| self.passive_entity_types.iter().find(|p| p.id == id).map(|p| p.label.as_str()))
            .or_else(|| self.dynamic_scope_types.iter().find(|s| s.id == id).map(|s| s.label.as_str()))
    }
}

/// Labels and names of the shipped catalog, for code on the runtime side.
pub mod shipped {
    pub const THREAD: &str = "Thread";
    pub const ACTOR: &str = "Actor";
    pub const PROCESS: &str = "Process";
    pub const TASK: &str = "Task";

    pub const LOCK: &str = "Lock";
    pub const CONDITION: &str = "Condition";
    pub const CHANNEL: &str = "Channel";
    pub const PROMISE: &str = "Promise";

    pub const MONITOR: &str = "Monitor";
    pub const TURN: &str = "Turn";
    pub const TRANSACTION: &str = "Transaction";

    pub const ACTOR_MESSAGE_SEND: &str = "ActorMessageSend";
    pub const PROMISE_RESOLVE: &str = "PromiseResolve";
    pub const CHANNEL_SEND: &str = "ChannelSend";
    pub const LOCK_ACQUIRE: &str = "LockAcquire";
    pub const CONDITION_SIGNAL: &str = "ConditionSignal";

    pub const CHANNEL_RECEIVE: &str = "ChannelReceive";
    pub const THREAD_JOIN: &str = "ThreadJoin";
    pub const PROCESS_JOIN: &str = "ProcessJoin";
    pub const TASK_JOIN: &str = "TaskJoin";
    pub const LOCK_RELEASE: &str = "LockRelease";
    pub const CONDITION_WAIT: &str = "ConditionWait";
}

// (name, label, tag)
const BREAKPOINTS: [(&str, &str, Tag); 21] = [
    ("activity-creation", "activity creation", Tag::ActivityCreation),
    ("activity-execution", "activity execution", Tag::ActivityCreation),
    ("before-join", "before join", Tag::ActivityJoin),
    ("after-join", "after join", Tag::ActivityJoin),
    ("actor-message-send", "actor message send", Tag::EventualMessageSend),
    ("actor-message-receiver", "actor message receiver", Tag::EventualMessageSend),
    ("before-async-method-activation", "before async. method activation", Tag::EventualMessageSend),
    ("after-async-method-activation", "after async. method activation", Tag::EventualMessageSend),
    ("before-promise-resolution", "before promise resolution", Tag::PromiseCreation),
    ("on-promise-resolution", "on promise resolution", Tag::PromiseCreation),
    ("before-channel-send", "before channel send", Tag::ChannelWrite),
    ("after-channel-receive", "after channel receive", Tag::ChannelWrite),
    ("before-channel-receive", "before channel receive", Tag::ChannelRead),
    ("after-channel-send", "after channel send", Tag::ChannelRead),
    ("before-transaction", "before transaction", Tag::Atomic),
    ("before-commit", "before commit", Tag::Atomic),
    ("after-commit", "after commit", Tag::Atomic),
    ("before-acquire", "before acquire", Tag::AcquireLock),
    ("after-acquire", "after acquire", Tag::AcquireLock),
    ("before-release", "before release", Tag::ReleaseLock),
    ("after-release", "after release", Tag::ReleaseLock),
];

enum Criterion {
    None,
    Tag(Tag),
    Activities(&'static [&'static str]),
    Scope(&'static str),
}

const STEPPING: [(&str, &str, Criterion); 20] = [
    ("resume", "resume", Criterion::None),
    ("pause", "pause", Criterion::None),
    ("stop", "stop", Criterion::None),
    ("step-into", "step into", Criterion::None),
    ("step-over", "step over", Criterion::None),
    ("return", "return", Criterion::None),
    ("step-into-activity", "step into activity", Criterion::Tag(Tag::ActivityCreation)),
    (
        "return-from-activity",
        "return from activity",
        Criterion::Activities(&[shipped::PROCESS, shipped::TASK, shipped::THREAD]),
    ),
    ("step-to-message-receiver", "step to message receiver", Criterion::Tag(Tag::EventualMessageSend)),
    ("step-to-promise-resolver", "step to promise resolver", Criterion::Tag(Tag::PromiseCreation)),
    ("step-to-promise-resolution", "step to promise resolution", Criterion::Tag(Tag::PromiseCreation)),
    ("step-to-next-turn", "step to next turn", Criterion::Activities(&[shipped::ACTOR])),
    (
        "return-from-turn-to-resolution",
        "return from turn to resolution",
        Criterion::Activities(&[shipped::ACTOR]),
    ),
    ("step-to-channel-receiver", "step to channel receiver", Criterion::Tag(Tag::ChannelWrite)),
    ("step-to-channel-sender", "step to channel sender", Criterion::Tag(Tag::ChannelRead)),
    ("step-to-next-transaction", "step to next transaction", Criterion::Scope(shipped::TRANSACTION)),
    ("step-to-commit", "step to commit", Criterion::Scope(shipped::TRANSACTION)),
    ("step-after-commit", "step after commit", Criterion::Scope(shipped::TRANSACTION)),
    ("step-to-release", "step to release", Criterion::Scope(shipped::MONITOR)),
    ("step-to-next-acquire", "step to next acquire", Criterion::Scope(shipped::MONITOR)),
];

/// The catalog of the shipped runtime: four activity types, three scope
/// types, four passive entity types, 21 breakpoint and 20 stepping types.
pub fn build_shipped_catalog() -> MetaDataCatalog {
    use shipped::*;

    let activity = |id, label: &str, creation_marker, completion_marker, icon: &str| ActivityType {
        id,
        label: label.into(),
        creation_marker,
        completion_marker,
        icon: icon.into(),
    };
    let activity_types = vec![
        activity(1, THREAD, 0x10, 0x11, "thread"),
        activity(2, ACTOR, 0x12, 0x13, "actor"),
        activity(3, PROCESS, 0x14, 0x15, "process"),
        activity(4, TASK, 0x16, 0x17, "task"),
    ];
    let passive = |id, label: &str, creation_marker| PassiveEntityType {
        id,
        label: label.into(),
        creation_marker,
    };
    let passive_entity_types = vec![
        passive(5, LOCK, 0x20),
        passive(6, CONDITION, 0x21),
        passive(7, CHANNEL, 0x22),
        passive(8, PROMISE, 0x23),
    ];
    let scope = |id, label: &str, start_marker, end_marker| DynamicScopeType {
        id,
        label: label.into(),
        start_marker,
        end_marker,
    };
    let dynamic_scope_types = vec![
        scope(9, MONITOR, 0x30, 0x31),
        scope(10, TURN, 0x32, 0x33),
        scope(11, TRANSACTION, 0x34, 0x35),
    ];
    // An actor message is identified by the id of the turn it starts.
    let send = |marker, label: &str, entity_type_id, target_type_id| SendOpType {
        marker,
        label: label.into(),
        entity_type_id,
        target_type_id,
    };
    let send_op_types = vec![
        send(0x40, ACTOR_MESSAGE_SEND, 10, 2),
        send(0x41, PROMISE_RESOLVE, 8, 8),
        send(0x42, CHANNEL_SEND, 7, 7),
        send(0x43, LOCK_ACQUIRE, 5, 5),
        send(0x44, CONDITION_SIGNAL, 6, 6),
    ];
    let receive = |marker, label: &str, source_type_id| ReceiveOpType {
        marker,
        label: label.into(),
        source_type_id,
    };
    let receive_op_types = vec![
        receive(0x50, CHANNEL_RECEIVE, 7),
        receive(0x51, THREAD_JOIN, 1),
        receive(0x52, PROCESS_JOIN, 3),
        receive(0x53, TASK_JOIN, 4),
        receive(0x54, LOCK_RELEASE, 5),
        receive(0x55, CONDITION_WAIT, 6),
    ];

    let breakpoint_types = BREAKPOINTS
        .iter()
        .map(|(name, label, tag)| BreakpointType {
            name: (*name).into(),
            label: (*label).into(),
            applicable_tags: vec![tag.as_str().into()],
        })
        .collect();

    let activity_id = |label: &str| activity_types.iter().find(|a| a.label == label).unwrap().id;
    let scope_id = |label: &str| dynamic_scope_types.iter().find(|s| s.label == label).unwrap().id;
    let stepping_types = STEPPING
        .iter()
        .map(|(name, label, criterion)| {
            let mut st = SteppingType {
                name: (*name).into(),
                label: (*label).into(),
                applicable_tags: vec![],
                applicable_activity_type_ids: vec![],
                applicable_scope_type_ids: vec![],
            };
            match criterion {
                Criterion::None => {}
                Criterion::Tag(tag) => st.applicable_tags.push(tag.as_str().into()),
                Criterion::Activities(labels) => {
                    st.applicable_activity_type_ids = labels.iter().map(|l| activity_id(l)).collect()
                }
                Criterion::Scope(label) => st.applicable_scope_type_ids.push(scope_id(label)),
            }
            st
        })
        .collect();

    let catalog = MetaDataCatalog {
        activity_types,
        passive_entity_types,
        dynamic_scope_types,
        send_op_types,
        receive_op_types,
        breakpoint_types,
        stepping_types,
    };
    debug_assert!(catalog.validate().is_ok());
    catalog
}

//! Trace oracles that only look at decoded events, independent of the
//! runtime's own bookkeeping.

use std::collections::{BTreeSet, HashMap, HashSet};

use polydbg_protocol::catalog::shipped;
use polydbg_protocol::{build_shipped_catalog, TraceEvent};

pub struct Markers {
    pub channel_send: u8,
    pub channel_receive: u8,
    pub joins: HashSet<u8>,
    pub promise_resolve: u8,
    pub actor_send: u8,
    pub turn: (u8, u8),
    pub scopes: HashMap<u8, u8>,
    pub lock_acquire: u8,
    pub lock_release: u8,
}

pub fn markers() -> Markers {
    let c = build_shipped_catalog();
    let turn = c.scope_type(shipped::TURN).unwrap();
    Markers {
        channel_send: c.send_op(shipped::CHANNEL_SEND).unwrap().marker,
        channel_receive: c.receive_op(shipped::CHANNEL_RECEIVE).unwrap().marker,
        joins: [shipped::THREAD_JOIN, shipped::PROCESS_JOIN, shipped::TASK_JOIN]
            .iter()
            .map(|l| c.receive_op(l).unwrap().marker)
            .collect(),
        promise_resolve: c.send_op(shipped::PROMISE_RESOLVE).unwrap().marker,
        actor_send: c.send_op(shipped::ACTOR_MESSAGE_SEND).unwrap().marker,
        turn: (turn.start_marker, turn.end_marker),
        scopes: c.dynamic_scope_types.iter().map(|s| (s.start_marker, s.end_marker)).collect(),
        lock_acquire: c.send_op(shipped::LOCK_ACQUIRE).unwrap().marker,
        lock_release: c.receive_op(shipped::LOCK_RELEASE).unwrap().marker,
    }
}

pub type Clock = HashMap<u64, u64>;

pub fn leq(a: &Clock, b: &Clock) -> bool {
    a.iter().all(|(k, v)| b.get(k).copied().unwrap_or(0) >= *v)
}

fn merge(into: &mut Clock, other: &Clock) {
    for (k, v) in other {
        let e = into.entry(*k).or_insert(0);
        *e = (*e).max(*v);
    }
}

/// Vector clock after each event, from program order, creation and join
/// edges, plus message send -> turn start edges if `messages` is set.
/// Fails if those edges are cyclic or reference events that never occur.
pub fn clocks(events: &[(u64, TraceEvent)], m: &Markers, messages: bool) -> Result<Vec<Clock>, String> {
    let mut per: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, (a, _)) in events.iter().enumerate() {
        per.entry(*a).or_default().push(i);
    }
    let mut out: Vec<Option<Clock>> = vec![None; events.len()];
    let mut cursor: HashMap<u64, usize> = per.keys().map(|a| (*a, 0)).collect();
    let mut current: HashMap<u64, Clock> = HashMap::new();
    let mut start: HashMap<u64, Clock> = HashMap::new();
    let mut finish: HashMap<u64, Clock> = HashMap::new();
    let mut sent: HashMap<u64, Clock> = HashMap::new();
    start.insert(1, Clock::new());
    loop {
        let mut progressed = false;
        for (activity, idxs) in &per {
            loop {
                let pos = cursor[activity];
                if pos == idxs.len() {
                    break;
                }
                if !current.contains_key(activity) {
                    match start.get(activity) {
                        Some(c) => {
                            current.insert(*activity, c.clone());
                        }
                        None => break,
                    }
                }
                let i = idxs[pos];
                let mut clock = current[activity].clone();
                match &events[i].1 {
                    TraceEvent::ReceiveOperation { marker, source_id } if m.joins.contains(marker) => {
                        match finish.get(source_id) {
                            Some(f) => merge(&mut clock, f),
                            None => break,
                        }
                    }
                    TraceEvent::ScopeStart { marker, scope_id, .. } if messages && *marker == m.turn.0 => {
                        match sent.get(scope_id) {
                            Some(s) => merge(&mut clock, s),
                            None => break,
                        }
                    }
                    _ => {}
                }
                *clock.entry(*activity).or_insert(0) += 1;
                match &events[i].1 {
                    TraceEvent::ActivityCreation { activity_id, .. } if activity_id != activity => {
                        start.insert(*activity_id, clock.clone());
                    }
                    TraceEvent::SendOperation { marker, entity_id, .. } if *marker == m.actor_send => {
                        sent.insert(*entity_id, clock.clone());
                    }
                    _ => {}
                }
                current.insert(*activity, clock.clone());
                out[i] = Some(clock);
                cursor.insert(*activity, pos + 1);
                if pos + 1 == idxs.len() {
                    finish.insert(*activity, current[activity].clone());
                }
                progressed = true;
            }
        }
        if cursor.iter().all(|(a, p)| *p == per[a].len()) {
            break;
        }
        if !progressed {
            let stuck: Vec<_> = cursor.iter().filter(|(a, p)| **p < per[a].len()).map(|(a, _)| *a).collect();
            return Err(format!("no causal order: activities {stuck:?} cannot advance"));
        }
    }
    Ok(out.into_iter().map(|c| c.expect("every event ordered")).collect())
}

/// Whether sends and receives on each channel admit a pairing where no
/// receive happens before its send.
pub fn rendezvous_pairs_exist(events: &[(u64, TraceEvent)], m: &Markers) -> bool {
    let Ok(vc) = clocks(events, m, false) else { return false };
    let mut sends: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut recvs: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, (_, e)) in events.iter().enumerate() {
        match e {
            TraceEvent::SendOperation { marker, entity_id, .. } if *marker == m.channel_send => {
                sends.entry(*entity_id).or_default().push(i)
            }
            TraceEvent::ReceiveOperation { marker, source_id } if *marker == m.channel_receive => {
                recvs.entry(*source_id).or_default().push(i)
            }
            _ => {}
        }
    }
    let channels: BTreeSet<u64> = sends.keys().chain(recvs.keys()).copied().collect();
    channels.into_iter().all(|ch| {
        let s = sends.get(&ch).cloned().unwrap_or_default();
        let r = recvs.get(&ch).cloned().unwrap_or_default();
        if s.len() != r.len() {
            return false;
        }
        let allowed = |si: usize, ri: usize| !(leq(&vc[r[ri]], &vc[s[si]]) && vc[r[ri]] != vc[s[si]]);
        // augmenting-path bipartite matching
        let mut owner: Vec<Option<usize>> = vec![None; r.len()];
        fn augment(
            si: usize,
            seen: &mut [bool],
            owner: &mut [Option<usize>],
            allowed: &dyn Fn(usize, usize) -> bool,
        ) -> bool {
            for ri in 0..owner.len() {
                if allowed(si, ri) && !seen[ri] {
                    seen[ri] = true;
                    if owner[ri].is_none() || augment(owner[ri].unwrap(), seen, owner, allowed) {
                        owner[ri] = Some(si);
                        return true;
                    }
                }
            }
            false
        }
        (0..s.len()).all(|si| augment(si, &mut vec![false; r.len()], &mut owner, &allowed))
    })
}

/// No actor starts a turn while another of its turns is open.
pub fn turns_exclusive(events: &[(u64, TraceEvent)], m: &Markers) -> Result<(), String> {
    let mut open: HashMap<u64, bool> = HashMap::new();
    for (a, e) in events {
        if e.marker() == m.turn.0 && open.insert(*a, true).unwrap_or(false) {
            return Err(format!("activity {a} started a turn inside a turn"));
        } else if e.marker() == m.turn.1 && !open.insert(*a, false).unwrap_or(false) {
            return Err(format!("activity {a} ended a turn it did not start"));
        }
    }
    match open.iter().find(|(_, o)| **o) {
        Some((a, _)) => Err(format!("activity {a} left a turn open")),
        None => Ok(()),
    }
}

/// Each promise is resolved at most once.
pub fn promises_resolved_once(events: &[(u64, TraceEvent)], m: &Markers) -> Result<usize, String> {
    let mut resolved: HashMap<u64, usize> = HashMap::new();
    for (_, e) in events {
        if let TraceEvent::SendOperation { marker, entity_id, .. } = e {
            if *marker == m.promise_resolve {
                *resolved.entry(*entity_id).or_default() += 1;
            }
        }
    }
    match resolved.iter().find(|(_, n)| **n > 1) {
        Some((p, n)) => Err(format!("promise {p} resolved {n} times")),
        None => Ok(resolved.len()),
    }
}

/// Activity, passive entity and scope ids are never reused.
pub fn ids_unique(events: &[(u64, TraceEvent)]) -> Result<(), String> {
    let mut ids = HashSet::new();
    for (_, e) in events {
        let id = match e {
            TraceEvent::ActivityCreation { activity_id, .. } => *activity_id,
            TraceEvent::PassiveEntityCreation { entity_id, .. } => *entity_id,
            TraceEvent::ScopeStart { scope_id, .. } => *scope_id,
            _ => continue,
        };
        if !ids.insert(id) {
            return Err(format!("duplicate id {id}"));
        }
    }
    Ok(())
}

/// Scope starts and ends nest properly within every activity and all
/// scopes are closed.
pub fn scopes_balanced(events: &[(u64, TraceEvent)], m: &Markers) -> Result<(), String> {
    let ends: HashSet<u8> = m.scopes.values().copied().collect();
    let mut stacks: HashMap<u64, Vec<u8>> = HashMap::new();
    for (a, e) in events {
        let marker = e.marker();
        if let Some(end) = m.scopes.get(&marker) {
            stacks.entry(*a).or_default().push(*end);
        } else if ends.contains(&marker) && stacks.entry(*a).or_default().pop() != Some(marker) {
            return Err(format!("activity {a}: scope end {marker:#x} does not match"));
        }
    }
    match stacks.iter().find(|(_, s)| !s.is_empty()) {
        Some((a, s)) => Err(format!("activity {a}: {} scopes left open", s.len())),
        None => Ok(()),
    }
}

/// Every turn has a message send that strictly happens before it.
pub fn turns_follow_sends(events: &[(u64, TraceEvent)], m: &Markers) -> Result<usize, String> {
    let vc = clocks(events, m, true)?;
    let mut sends: HashMap<u64, usize> = HashMap::new();
    for (i, (_, e)) in events.iter().enumerate() {
        if let TraceEvent::SendOperation { marker, entity_id, .. } = e {
            if *marker == m.actor_send {
                sends.insert(*entity_id, i);
            }
        }
    }
    let mut turns = 0;
    for (i, (_, e)) in events.iter().enumerate() {
        if let TraceEvent::ScopeStart { marker, scope_id, .. } = e {
            if *marker != m.turn.0 {
                continue;
            }
            let s = *sends.get(scope_id).ok_or_else(|| format!("turn {scope_id} has no send"))?;
            if !(leq(&vc[s], &vc[i]) && vc[s] != vc[i]) {
                return Err(format!("turn {scope_id} does not follow its send"));
            }
            turns += 1;
        }
    }
    Ok(turns)
}

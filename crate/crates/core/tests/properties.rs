//! Randomized programs checked against independent oracles.

mod common;

use std::collections::{HashMap, HashSet};

use common::oracles::{ids_unique, markers, promises_resolved_once, rendezvous_pairs_exist, turns_exclusive};
use common::run;
use polydbg_protocol::catalog::shipped;
use polydbg_protocol::{build_shipped_catalog, TraceEvent};
use proptest::prelude::*;

// ---- STM ----

#[derive(Debug, Clone, Copy)]
struct Op {
    target: usize,
    source: usize,
    mul: i64,
    add: i64,
}

fn op() -> impl Strategy<Value = Op> {
    (0..2usize, 0..2usize, 1..=3i64, 0..=3i64).prop_map(|(target, source, mul, add)| Op { target, source, mul, add })
}

type Txn = Vec<Op>;

fn apply(state: [i64; 2], txn: &Txn) -> [i64; 2] {
    let mut s = state;
    for o in txn {
        s[o.target] = s[o.source] * o.mul + o.add;
    }
    s
}

/// Every final state some serial interleaving of the activities' sequences
/// can produce.
fn serial_outcomes(init: [i64; 2], acts: &[Vec<Txn>]) -> HashSet<[i64; 2]> {
    let mut memo: HashMap<Vec<usize>, HashSet<[i64; 2]>> = HashMap::new();
    memo.insert(vec![0; acts.len()], [init].into_iter().collect());
    let total: usize = acts.iter().map(Vec::len).sum();
    let mut frontier = vec![vec![0; acts.len()]];
    for _ in 0..total {
        let mut next = Vec::new();
        for pos in frontier {
            let states = memo[&pos].clone();
            for (a, seq) in acts.iter().enumerate() {
                if pos[a] < seq.len() {
                    let mut p = pos.clone();
                    p[a] += 1;
                    let entry = memo.entry(p.clone()).or_insert_with(|| {
                        next.push(p.clone());
                        HashSet::new()
                    });
                    entry.extend(states.iter().map(|s| apply(*s, &seq[pos[a]])));
                }
            }
        }
        frontier = next;
    }
    memo.remove(&acts.iter().map(Vec::len).collect::<Vec<_>>()).unwrap()
}

fn stm_program(acts: &[Vec<Txn>]) -> String {
    let mut src = String::from("let c0 = cell(1);\nlet c1 = cell(2);\n");
    for (a, txns) in acts.iter().enumerate() {
        src += &format!("fn w{a}() {{\n");
        for txn in txns {
            src += "  atomic {\n";
            for o in txn {
                src += &format!("    c{}.set(c{}.get() * {} + {});\n", o.target, o.source, o.mul, o.add);
            }
            src += "  }\n";
        }
        src += "}\n";
    }
    src += "fn main() {\n";
    for a in 0..acts.len() {
        src += &format!("  let t{a} = spawn(w{a});\n");
    }
    for a in 0..acts.len() {
        src += &format!("  join(t{a});\n");
    }
    src += "  print(c0.get(), c1.get());\n}\n";
    src
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn stm_is_serializable(acts in prop::collection::vec(
        prop::collection::vec(prop::collection::vec(op(), 1..=2), 1..=5), 1..=3)) {
        let (out, _) = run(&stm_program(&acts));
        prop_assert_eq!(out.status, 0, "{:?}", out.errors);
        let parts: Vec<i64> = out.output[0].split(' ').map(|v| v.parse().unwrap()).collect();
        let outcomes = serial_outcomes([1, 2], &acts);
        prop_assert!(outcomes.contains(&[parts[0], parts[1]]), "{:?} not in {:?}", parts, outcomes);
    }

    #[test]
    fn rendezvous_pairs_and_fifo(counts in prop::collection::vec(0..=3usize, 1..=3)) {
        let mut src = String::from("fn send(ch, base, n) {\n  let i = 0;\n  while i < n {\n    ch.send(base + i);\n    i = i + 1;\n  }\n}\nfn main() {\n  let ch = channel();\n");
        for (s, n) in counts.iter().enumerate() {
            src += &format!("  let s{s} = spawn(send, ch, {}, {n});\n", s * 100);
        }
        let total: usize = counts.iter().sum();
        src += &format!("  let k = 0;\n  while k < {total} {{\n    print(ch.receive());\n    k = k + 1;\n  }}\n");
        for s in 0..counts.len() {
            src += &format!("  join(s{s});\n");
        }
        src += "}\n";
        let (out, events) = run(&src);
        prop_assert_eq!(out.status, 0, "{:?}", out.errors);
        let got: Vec<usize> = out.output.iter().map(|v| v.parse().unwrap()).collect();
        let mut expected: Vec<usize> = counts.iter().enumerate().flat_map(|(s, n)| (0..*n).map(move |i| s * 100 + i)).collect();
        let mut sorted = got.clone();
        sorted.sort();
        expected.sort();
        prop_assert_eq!(&sorted, &expected);
        for s in 0..counts.len() {
            let mine: Vec<usize> = got.iter().copied().filter(|v| v / 100 == s).collect();
            prop_assert!(mine.windows(2).all(|w| w[0] < w[1]), "sender {} out of order: {:?}", s, mine);
        }
        prop_assert!(rendezvous_pairs_exist(&events, &markers()));
    }

    #[test]
    fn actor_rings(size in 1..=3usize, hops in 0..=6i64) {
        let mut src = String::from("fn R.init(next) {\n  self.next = next;\n}\nfn R.relay(n) {\n  print(n);\n  if n > 0 {\n    self.next <- relay(n - 1);\n  }\n}\nfn main() {\n");
        for a in 0..size {
            src += &format!("  let a{a} = actor(R);\n");
        }
        for a in 0..size {
            src += &format!("  a{a} <- init(a{});\n", (a + 1) % size);
        }
        src += &format!("  a0 <- relay({hops});\n}}\n");
        let (out, events) = run(&src);
        prop_assert_eq!(out.status, 0, "{:?}", out.errors);
        prop_assert_eq!(out.output.len() as i64, hops + 1);
        let m = markers();
        let turns = events.iter().filter(|(_, e)| e.marker() == m.turn.0).count();
        prop_assert_eq!(turns as i64, size as i64 + hops + 1);

        let resolved = promises_resolved_once(&events, &m);
        let sends = events.iter().filter(|(_, e)| e.marker() == m.actor_send).count();
        prop_assert_eq!(resolved, Ok(sends));
        prop_assert_eq!(turns_exclusive(&events, &m), Ok(()));
        prop_assert_eq!(ids_unique(&events), Ok(()));
    }

    #[test]
    fn locks_exclude(threads in 1..=3usize, n in 1..=30usize) {
        let mut src = String::from("let count = 0;\nfn work(l, n) {\n  let i = 0;\n  while i < n {\n    acquire(l);\n    count = count + 1;\n    release(l);\n    i = i + 1;\n  }\n}\nfn main() {\n  let l = lock();\n");
        for t in 0..threads {
            src += &format!("  let t{t} = spawn(work, l, {n});\n");
        }
        for t in 0..threads {
            src += &format!("  join(t{t});\n");
        }
        src += "  print(count);\n}\n";
        let (out, events) = run(&src);
        prop_assert_eq!(out.status, 0, "{:?}", out.errors);
        prop_assert_eq!(out.output[0].parse::<usize>().unwrap(), threads * n);
        let m = markers();
        // within each activity, acquire and release strictly alternate
        let mut held: HashMap<u64, bool> = HashMap::new();
        for (a, e) in &events {
            if e.marker() == m.lock_acquire {
                prop_assert!(!held.insert(*a, true).unwrap_or(false));
            } else if e.marker() == m.lock_release {
                prop_assert!(held.insert(*a, false).unwrap_or(false));
            }
        }
    }
}

#[test]
fn oracle_rejects_receive_before_send() {
    let m = markers();
    let loc = polydbg_protocol::SourceLocation::new(polydbg_protocol::SymbolId(1), 1, 1, 1);
    let name = polydbg_protocol::SymbolId(0);
    let creation = |id| TraceEvent::ActivityCreation { marker: 0, activity_id: id, name, location: loc };
    // main creates 2, receives on 9, then joins 2 which sends on 9 afterwards
    let c = build_shipped_catalog();
    let thread = c.activity_type(shipped::THREAD).unwrap();
    let join = c.receive_op(shipped::THREAD_JOIN).unwrap().marker;
    let events = vec![
        (1, creation(1).with_marker(thread.creation_marker)),
        (1, creation(2).with_marker(thread.creation_marker)),
        (1, TraceEvent::ReceiveOperation { marker: m.channel_receive, source_id: 9 }),
        (2, TraceEvent::SendOperation { marker: m.channel_send, entity_id: 9, target_id: 9 }),
        (2, TraceEvent::ActivityCompletion { marker: thread.completion_marker }),
        (1, TraceEvent::ReceiveOperation { marker: join, source_id: 2 }),
    ];
    assert!(rendezvous_pairs_exist(&events, &m));
    let bad = vec![
        (1, creation(1).with_marker(thread.creation_marker)),
        (1, TraceEvent::ReceiveOperation { marker: m.channel_receive, source_id: 9 }),
        (1, creation(2).with_marker(thread.creation_marker)),
        (2, TraceEvent::SendOperation { marker: m.channel_send, entity_id: 9, target_id: 9 }),
    ];
    assert!(!rendezvous_pairs_exist(&bad, &m));
}

#[test]
fn serial_oracle_enumerates_orders() {
    let inc = vec![Op { target: 0, source: 0, mul: 1, add: 1 }];
    let dbl = vec![Op { target: 0, source: 0, mul: 2, add: 0 }];
    let outcomes = serial_outcomes([1, 0], &[vec![inc], vec![dbl]]);
    assert_eq!(outcomes, [[4, 0], [3, 0]].into_iter().collect());
}

#[test]
fn turn_oracle_rejects_turns_without_prior_send() {
    let m = markers();
    let loc = polydbg_protocol::SourceLocation::new(polydbg_protocol::SymbolId(1), 1, 1, 1);
    let c = build_shipped_catalog();
    let actor = c.activity_type(shipped::ACTOR).unwrap();
    let creation = |id| TraceEvent::ActivityCreation {
        marker: actor.creation_marker,
        activity_id: id,
        name: polydbg_protocol::SymbolId(0),
        location: loc,
    };
    let start = |id| TraceEvent::ScopeStart { marker: m.turn.0, scope_id: id, location: loc };
    let end = TraceEvent::ScopeEnd { marker: m.turn.1 };
    let send = |id, to| TraceEvent::SendOperation { marker: m.actor_send, entity_id: id, target_id: to };
    let good = vec![(1, creation(1)), (1, creation(2)), (1, send(3, 2)), (2, start(3)), (2, end)];
    assert_eq!(common::oracles::turns_follow_sends(&good, &m), Ok(1));
    assert_eq!(common::oracles::scopes_balanced(&good, &m), Ok(()));

    // the actor sends its own message only after the turn it starts
    let cyclic = vec![(1, creation(1)), (1, creation(2)), (2, start(3)), (2, end), (2, send(3, 2))];
    assert!(common::oracles::turns_follow_sends(&cyclic, &m).is_err());
    let orphan = vec![(1, creation(1)), (1, start(4)), (1, end)];
    assert!(common::oracles::turns_follow_sends(&orphan, &m).is_err());
    let unbalanced = vec![(1, creation(1)), (1, start(4)), (1, end), (1, end)];
    assert!(common::oracles::scopes_balanced(&unbalanced, &m).is_err());
}

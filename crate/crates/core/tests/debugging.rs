mod common;

use common::{harness, program, stop_line, stop_scopes, Harness};
use polydbg_core::runtime::RunConfig;
use polydbg_protocol::{ControlMessage, Tag};

const THREADS: &str = "\
fn f() {
  print(\"child\");
}
fn main() {
  let t = spawn(f);
  join(t);
}
";

const ACTORS: &str = "\
fn A.go(b) {
  let p = b <- work(1);
  whenResolved(p, done);
}
fn B.work(n) {
  print(\"work\", n);
  return n;
}
fn done(v) {
  print(\"done\", v);
}
fn main() {
  let b = actor(B);
  actor(A) <- go(b);
}
";

const CHANNELS: &str = "\
fn produce(ch) {
  ch.send(5);
}
fn main() {
  let ch = channel();
  let p = spawn(produce, ch);
  print(ch.receive());
  join(p);
}
";

const LOCKS: &str = "\
fn main() {
  let l = lock();
  monitor(l) {
    print(\"in\");
  }
  acquire(l);
  release(l);
}
";

const TWO_TXNS: &str = "\
let c = cell(0);
fn main() {
  atomic {
    c.set(1);
  }
  print(c.get());
  atomic {
    c.set(2);
  }
}
";

const CONTENDED: &str = "\
let t = nil;
fn worker(l) {
  monitor(l) {
    print(\"worker\");
  }
}
fn main() {
  let l = lock();
  monitor(l) {
    t = spawn(worker, l);
    print(\"main\");
  }
  join(t);
}
";

const CALLS: &str = "\
fn inner(x) {
  let y = x + 1;
  return y;
}
fn outer() {
  let a = inner(1);
  let b = inner(a);
  return b;
}
fn main() {
  let r = outer();
  print(r);
}
";

fn launch(h: &Harness) -> std::thread::JoinHandle<polydbg_core::runtime::RunOutcome> {
    h.session.launch(RunConfig::default()).expect("first launch")
}

fn launch_paused(h: &Harness) -> std::thread::JoinHandle<polydbg_core::runtime::RunOutcome> {
    h.session.launch(RunConfig { pause_on_entry: true, ..RunConfig::default() }).expect("first launch")
}

#[test]
fn every_breakpoint_type_halts_where_expected() {
    let cases: &[(&str, &str, u32, Tag, u32)] = &[
        ("activity-creation", THREADS, 5, Tag::ActivityCreation, 5),
        ("activity-execution", THREADS, 5, Tag::ActivityCreation, 2),
        ("before-join", THREADS, 6, Tag::ActivityJoin, 6),
        ("after-join", THREADS, 6, Tag::ActivityJoin, 6),
        ("actor-message-send", ACTORS, 2, Tag::EventualMessageSend, 2),
        ("actor-message-receiver", ACTORS, 2, Tag::EventualMessageSend, 6),
        ("before-async-method-activation", ACTORS, 2, Tag::EventualMessageSend, 6),
        ("after-async-method-activation", ACTORS, 2, Tag::EventualMessageSend, 8),
        ("before-promise-resolution", ACTORS, 2, Tag::PromiseCreation, 8),
        ("on-promise-resolution", ACTORS, 2, Tag::PromiseCreation, 10),
        ("before-channel-send", CHANNELS, 2, Tag::ChannelWrite, 2),
        ("after-channel-receive", CHANNELS, 2, Tag::ChannelWrite, 7),
        ("before-channel-receive", CHANNELS, 7, Tag::ChannelRead, 7),
        ("after-channel-send", CHANNELS, 7, Tag::ChannelRead, 2),
        ("before-transaction", TWO_TXNS, 3, Tag::Atomic, 3),
        ("before-commit", TWO_TXNS, 3, Tag::Atomic, 5),
        ("after-commit", TWO_TXNS, 3, Tag::Atomic, 5),
        ("before-acquire", LOCKS, 3, Tag::AcquireLock, 3),
        ("after-acquire", LOCKS, 3, Tag::AcquireLock, 3),
        ("before-release", LOCKS, 5, Tag::ReleaseLock, 5),
        ("after-release", LOCKS, 5, Tag::ReleaseLock, 5),
        ("before-acquire", LOCKS, 6, Tag::AcquireLock, 6),
        ("after-release", LOCKS, 7, Tag::ReleaseLock, 7),
    ];
    for (name, src, line, tag, expected) in cases {
        let h = harness(src);
        h.breakpoint(name, *line, *tag);
        let run = launch(&h);
        let (status, stops) = h.drain();
        assert_eq!(status, 0, "{name}");
        assert_eq!(stops.len(), 1, "{name}: {stops:?}");
        assert_eq!(stops[0].1, *expected, "{name}");
        assert_eq!(run.join().unwrap().status, 0);
    }
}

#[test]
fn disabled_breakpoint_does_not_halt() {
    let h = harness(THREADS);
    h.breakpoint("before-join", 6, Tag::ActivityJoin);
    let mut spec = polydbg_protocol::control::BreakpointSpec {
        breakpoint_type: "before-join".into(),
        location: h.site(6, Tag::ActivityJoin),
        enabled: false,
    };
    h.session.debugger().update_breakpoint(&spec).unwrap();
    launch(&h);
    assert_eq!(h.drain(), (0, vec![]));
    spec.breakpoint_type = "before-commit".into();
    assert!(h.session.debugger().update_breakpoint(&spec).is_err());
}

#[test]
fn transaction_walkthrough() {
    let h = harness(&program("transfer.pd"));
    h.breakpoint("before-transaction", 7, Tag::Atomic);
    let run = launch(&h);
    let (aid, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 7);
    assert!(stop_scopes(&stop).is_empty());
    h.step(aid, "step-into");
    let (_, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 8);
    assert_eq!(stop_scopes(&stop), vec!["Transaction"]);
    let steps = h.session.debugger().applicable_steps(aid).unwrap();
    for s in ["step-to-next-transaction", "step-to-commit", "step-after-commit"] {
        assert!(steps.iter().any(|x| x == s), "{s} missing from {steps:?}");
    }
    h.step(aid, "step-to-commit");
    let (_, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 10);
    assert_eq!(stop_scopes(&stop), vec!["Transaction"]);
    h.step(aid, "step-after-commit");
    let (_, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 10);
    assert!(stop_scopes(&stop).is_empty());
    h.step(aid, "resume");
    assert_eq!(h.drain(), (0, vec![]));
    assert_eq!(run.join().unwrap().output, vec!["70 30"]);
}

#[test]
fn step_to_next_transaction_skips_ahead() {
    let h = harness(TWO_TXNS);
    h.breakpoint("after-commit", 3, Tag::Atomic);
    launch(&h);
    let (aid, _) = h.next_stop();
    h.step(aid, "step-into");
    let (_, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 6);
    assert!(h.session.debugger().step(aid, "step-to-next-transaction").is_err(), "needs a transaction scope");
    h.step(aid, "resume");
    assert_eq!(h.drain().0, 0);

    let h = harness(TWO_TXNS);
    h.breakpoint("before-commit", 3, Tag::Atomic);
    launch(&h);
    let (aid, _) = h.next_stop();
    h.step(aid, "step-to-next-transaction");
    let (_, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 7);
    h.step(aid, "resume");
    assert_eq!(h.drain(), (0, vec![]));
}

#[test]
fn sequential_stepping() {
    let h = harness(CALLS);
    h.session.debugger().step(1, "pause").unwrap_err();
    let run = launch_paused(&h);
    let (aid, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 11);
    let mut lines = Vec::new();
    for step in ["step-into", "step-into", "step-over", "step-into", "step-over", "return"] {
        h.step(aid, step);
        let (_, stop) = h.next_stop();
        lines.push(stop_line(&stop));
    }
    assert_eq!(lines, vec![6, 2, 3, 7, 8, 12]);
    h.step(aid, "resume");
    assert_eq!(h.drain(), (0, vec![]));
    assert_eq!(run.join().unwrap().output, vec!["3"]);
}

#[test]
fn stack_and_variables() {
    let h = harness(CALLS);
    h.session.debugger().update_breakpoint(&polydbg_protocol::control::BreakpointSpec {
        breakpoint_type: "before-join".into(),
        location: h.site(1, Tag::Keyword),
        enabled: true,
    }).unwrap_err();
    launch_paused(&h);
    let (aid, _) = h.next_stop();
    h.step(aid, "step-into");
    h.next_stop();
    h.step(aid, "step-into");
    h.next_stop();
    h.step(aid, "step-over");
    h.next_stop();
    let dbg = h.session.debugger();
    let ControlMessage::StackTraceResponse { frames, .. } = dbg.stack_trace(aid).unwrap() else { panic!() };
    let names: Vec<String> =
        frames.iter().map(|f| dbg.symbols().text(f.method_name_symbol).unwrap().to_string()).collect();
    assert_eq!(names, vec!["inner", "outer", "main"]);
    assert_eq!(frames[0].location.line, 3);
    let ControlMessage::VariablesResponse { variables, .. } = dbg.variables(aid, 0).unwrap() else { panic!() };
    let vars: Vec<(String, String)> = variables.into_iter().map(|v| (v.name, v.value)).collect();
    assert_eq!(vars, vec![("x".to_string(), "1".to_string()), ("y".to_string(), "2".to_string())]);
    assert!(dbg.variables(aid, 9).is_err());
    h.step(aid, "resume");
    assert_eq!(h.drain().0, 0);
}

#[test]
fn step_into_and_return_from_activity() {
    let h = harness(THREADS);
    h.breakpoint("activity-creation", 5, Tag::ActivityCreation);
    launch(&h);
    let (main, _) = h.next_stop();
    h.step(main, "step-into-activity");
    let (child, stop) = h.next_stop();
    assert_ne!(child, main);
    assert_eq!(stop_line(&stop), 2);
    h.step(child, "return-from-activity");
    let (who, stop) = h.next_stop();
    assert_eq!(who, main);
    assert_eq!(stop_line(&stop), 6);
    h.step(main, "resume");
    assert_eq!(h.drain(), (0, vec![]));
}

#[test]
fn actor_steps() {
    // to the receiver, then back to the resolution handler
    let h = harness(ACTORS);
    h.breakpoint("actor-message-send", 2, Tag::EventualMessageSend);
    launch(&h);
    let (a, _) = h.next_stop();
    h.step(a, "step-to-message-receiver");
    let (b, stop) = h.next_stop();
    assert_ne!(a, b);
    assert_eq!(stop_line(&stop), 6);
    let steps = h.session.debugger().applicable_steps(b).unwrap();
    assert!(steps.iter().any(|s| s == "step-to-next-turn"));
    assert!(!steps.iter().any(|s| s == "return-from-activity"));
    h.step(b, "return-from-turn-to-resolution");
    let (who, stop) = h.next_stop();
    assert_eq!(who, a);
    assert_eq!(stop_line(&stop), 10);
    h.step(who, "resume");
    assert_eq!(h.drain(), (0, vec![]));

    for (step, line) in [("step-to-promise-resolver", 8), ("step-to-promise-resolution", 10)] {
        let h = harness(ACTORS);
        h.breakpoint("actor-message-send", 2, Tag::EventualMessageSend);
        launch(&h);
        let (a, _) = h.next_stop();
        h.step(a, step);
        let (who, stop) = h.next_stop();
        assert_eq!(stop_line(&stop), line, "{step}");
        h.step(who, "resume");
        assert_eq!(h.drain(), (0, vec![]));
    }

    let h = harness(ACTORS);
    h.breakpoint("actor-message-send", 2, Tag::EventualMessageSend);
    launch(&h);
    let (a, _) = h.next_stop();
    h.step(a, "step-to-next-turn");
    let (who, stop) = h.next_stop();
    assert_eq!(who, a);
    assert_eq!(stop_line(&stop), 10);
    h.step(who, "resume");
    assert_eq!(h.drain(), (0, vec![]));
}

#[test]
fn channel_steps() {
    let h = harness(CHANNELS);
    h.breakpoint("before-channel-send", 2, Tag::ChannelWrite);
    launch(&h);
    let (sender, _) = h.next_stop();
    h.step(sender, "step-to-channel-receiver");
    let (receiver, stop) = h.next_stop();
    assert_ne!(sender, receiver);
    assert_eq!(stop_line(&stop), 7);
    h.step(receiver, "resume");
    assert_eq!(h.drain(), (0, vec![]));

    let h = harness(CHANNELS);
    h.breakpoint("before-channel-receive", 7, Tag::ChannelRead);
    launch(&h);
    let (receiver, _) = h.next_stop();
    h.step(receiver, "step-to-channel-sender");
    let (sender, stop) = h.next_stop();
    assert_ne!(sender, receiver);
    assert_eq!(stop_line(&stop), 2);
    h.step(sender, "resume");
    assert_eq!(h.drain(), (0, vec![]));
}

#[test]
fn lock_steps() {
    let h = harness(LOCKS);
    h.breakpoint("after-acquire", 3, Tag::AcquireLock);
    launch(&h);
    let (aid, stop) = h.next_stop();
    assert_eq!(stop_scopes(&stop), vec!["Monitor"]);
    h.step(aid, "step-to-release");
    let (_, stop) = h.next_stop();
    assert_eq!(stop_line(&stop), 5);
    h.step(aid, "resume");
    assert_eq!(h.drain(), (0, vec![]));

    let h = harness(CONTENDED);
    h.breakpoint("after-acquire", 9, Tag::AcquireLock);
    launch(&h);
    let (main, _) = h.next_stop();
    h.step(main, "step-to-next-acquire");
    let (worker, stop) = h.next_stop();
    assert_ne!(worker, main);
    assert_eq!(stop_line(&stop), 3);
    h.step(worker, "resume");
    assert_eq!(h.drain(), (0, vec![]));
}

#[test]
fn cross_activity_flags_fire_once() {
    let src = "\
fn f() {
  print(1);
}
fn main() {
  let i = 0;
  while i < 3 {
    join(spawn(f));
    i = i + 1;
  }
}
";
    let h = harness(src);
    h.breakpoint("activity-creation", 7, Tag::ActivityCreation);
    launch(&h);
    let (main, _) = h.next_stop();
    h.session.debugger().update_breakpoint(&polydbg_protocol::control::BreakpointSpec {
        breakpoint_type: "activity-creation".into(),
        location: h.site(7, Tag::ActivityCreation),
        enabled: false,
    }).unwrap();
    h.step(main, "step-into-activity");
    let (child, _) = h.next_stop();
    h.step(child, "resume");
    assert_eq!(h.drain(), (0, vec![]));
}

#[test]
fn pause_running_and_stop() {
    let h = harness("fn main() {\n  let x = 0;\n  while true {\n    x = x + 1;\n  }\n}\n");
    let run = launch(&h);
    while h.session.debugger().step(1, "pause").is_err() {}
    let (aid, _) = h.next_stop();
    assert_eq!(h.session.debugger().suspended(), vec![aid]);
    h.step(aid, "stop");
    let outcome = run.join().unwrap();
    assert_eq!(outcome.status, 0);
}

#[test]
fn stop_unblocks_waiting_activities() {
    let h = harness("fn main() {\n  let ch = channel();\n  ch.receive();\n}\n");
    let run = launch(&h);
    std::thread::sleep(std::time::Duration::from_millis(100));
    h.session.debugger().terminate();
    assert_eq!(run.join().unwrap().status, 0);
}

#[test]
fn detach_resumes_everything() {
    let h = harness(CHANNELS);
    h.breakpoint("before-channel-send", 2, Tag::ChannelWrite);
    h.breakpoint("before-channel-receive", 7, Tag::ChannelRead);
    let run = launch(&h);
    h.next_stop();
    h.session.debugger().detach();
    let outcome = run.join().unwrap();
    assert_eq!(outcome.status, 0);
    assert_eq!(outcome.output, vec!["5"]);
}

#[test]
fn steps_need_a_suspended_activity() {
    let h = harness(THREADS);
    let dbg = h.session.debugger();
    assert!(dbg.step(1, "step-into").is_err());
    assert!(dbg.step(99, "nonsense").is_err());
    launch(&h);
    assert_eq!(h.drain(), (0, vec![]));
}

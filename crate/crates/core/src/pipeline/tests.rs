use std::sync::{Arc, Mutex};

use proptest::prelude::*;

use super::*;

type Log = Arc<Mutex<Vec<(String, Event)>>>;

/// Records everything it receives; optionally forwards it.
struct Probe {
    name: String,
    ports: Ports,
    forward: bool,
    log: Log,
}

impl Probe {
    fn boxed(name: &str, ports: Ports, forward: bool, log: &Log) -> Box<dyn Component> {
        Box::new(Probe { name: name.into(), ports, forward, log: log.clone() })
    }
}

impl Component for Probe {
    fn catalog_kind(&self) -> &str {
        "probe"
    }
    fn ports(&self) -> Ports {
        self.ports
    }
    fn put(&mut self, event: &Event, out: &mut Outbox) -> Result<(), ComponentError> {
        self.log.lock().unwrap().push((self.name.clone(), event.clone()));
        if self.forward {
            out.emit(event.clone());
        }
        Ok(())
    }
}

struct Ticker {
    remaining: Vec<Event>,
}

impl Component for Ticker {
    fn catalog_kind(&self) -> &str {
        "ticker"
    }
    fn ports(&self) -> Ports {
        Ports::source(EventKind::Record)
    }
    fn is_source(&self) -> bool {
        true
    }
    fn pump(&mut self, out: &mut Outbox) -> Result<Activity, ComponentError> {
        if self.remaining.is_empty() {
            return Ok(Activity::Finished);
        }
        out.emit(self.remaining.remove(0));
        Ok(Activity::Pending)
    }
}

fn rr() -> Ports {
    Ports::filter(EventKind::Record, EventKind::Record)
}

fn names(log: &Log) -> Vec<String> {
    log.lock().unwrap().iter().map(|(n, _)| n.clone()).collect()
}

fn linear(log: &Log) -> Assembly {
    let mut a = Assembly::new("t");
    a.add("a", Probe::boxed("a", rr(), true, log)).unwrap();
    a.add("b", Probe::boxed("b", rr(), true, log)).unwrap();
    a.add("c", Probe::boxed("c", Ports::sink(EventKind::Record), false, log)).unwrap();
    a
}

#[test]
fn connect_matching_kinds() {
    let log = Log::default();
    let mut a = Assembly::new("t");
    a.add("s", Probe::boxed("s", Ports::filter(EventKind::Text, EventKind::Text), true, &log)).unwrap();
    a.add("d", Probe::boxed("d", Ports::sink(EventKind::Text), false, &log)).unwrap();
    let c = a
        .connect(&Port::socket("s", EventKind::Text), &Port::plug("d", EventKind::Text))
        .unwrap();
    assert_eq!(c.from.kind, c.to.kind);
    assert_eq!(a.connections().len(), 1);
}

#[test]
fn record_socket_to_text_plug_is_kind_mismatch() {
    let log = Log::default();
    let mut a = Assembly::new("t");
    a.add("s", Probe::boxed("s", rr(), true, &log)).unwrap();
    a.add("d", Probe::boxed("d", Ports::sink(EventKind::Text), false, &log)).unwrap();
    let err = a
        .connect(&Port::socket("s", EventKind::Record), &Port::plug("d", EventKind::Text))
        .unwrap_err();
    assert_eq!(err.code(), "KindMismatch");
    assert_eq!(a.wire("s", "d").unwrap_err().code(), "KindMismatch");
}

#[test]
fn back_edge_is_rejected() {
    let log = Log::default();
    let mut a = Assembly::new("t");
    a.add("a", Probe::boxed("a", rr(), true, &log)).unwrap();
    a.add("b", Probe::boxed("b", rr(), true, &log)).unwrap();
    a.wire("a", "b").unwrap();
    assert_eq!(a.wire("b", "a").unwrap_err().code(), "CycleWouldForm");
    assert_eq!(a.wire("a", "a").unwrap_err().code(), "CycleWouldForm");
    assert!(!a.has_cycle());
}

#[test]
fn connect_errors() {
    let log = Log::default();
    let mut a = linear(&log);
    assert_eq!(a.wire("a", "zzz").unwrap_err().code(), "UnknownComponent");
    assert_eq!(
        a.connect(&Port::plug("a", EventKind::Record), &Port::plug("b", EventKind::Record))
            .unwrap_err()
            .code(),
        "WrongDirection"
    );
    a.wire("a", "b").unwrap();
    assert_eq!(a.wire("a", "b").unwrap_err().code(), "DuplicateConnection");
    assert_eq!(a.add("a", Box::new(EventBus)).unwrap_err().code(), "DuplicateComponent");
    a.start().unwrap();
    assert_eq!(a.wire("b", "c").unwrap_err().code(), "AssemblyNotEditable");
}

#[test]
fn ambiguous_ports() {
    let log = Log::default();
    let both = Ports::new(KindSet::BOTH, KindSet::BOTH);
    let mut a = Assembly::new("t");
    a.add("x", Probe::boxed("x", both, true, &log)).unwrap();
    a.add("y", Probe::boxed("y", both, true, &log)).unwrap();
    assert_eq!(a.wire("x", "y").unwrap_err().code(), "AmbiguousPorts");
    // Explicit ports still work.
    a.connect(&Port::socket("x", EventKind::Text), &Port::plug("y", EventKind::Text)).unwrap();
}

#[test]
fn emit_with_no_registrants_is_noop() {
    let log = Log::default();
    let mut a = linear(&log);
    a.start().unwrap();
    a.emit("a", Event::record(1u8)).unwrap();
    assert!(log.lock().unwrap().is_empty());
}

#[test]
fn linear_delivery_is_transitive() {
    let log = Log::default();
    let mut a = linear(&log);
    a.wire("a", "b").unwrap();
    a.wire("b", "c").unwrap();
    a.start().unwrap();
    let e = Event::record(7u32);
    a.emit("a", e.clone()).unwrap();
    let got = log.lock().unwrap().clone();
    assert_eq!(got.len(), 2);
    assert_eq!(got[1].0, "c");
    assert!(got[1].1.same_instance(&e));
}

#[test]
fn fork_follows_registration_order_depth_first() {
    let log = Log::default();
    let mut a = Assembly::new("t");
    a.add("a", Probe::boxed("a", rr(), true, &log)).unwrap();
    a.add("c", Probe::boxed("c", rr(), false, &log)).unwrap();
    a.add("b", Probe::boxed("b", rr(), true, &log)).unwrap();
    a.add("b2", Probe::boxed("b2", rr(), false, &log)).unwrap();
    a.wire("a", "b").unwrap();
    a.wire("a", "c").unwrap();
    a.wire("b", "b2").unwrap();
    a.start().unwrap();
    a.emit("a", Event::record(0u8)).unwrap();
    // b's subtree completes before c receives the event.
    assert_eq!(names(&log), ["b", "b2", "c"]);
}

#[test]
fn emit_requires_running() {
    let log = Log::default();
    let mut a = linear(&log);
    assert_eq!(a.emit("a", Event::record(1u8)).unwrap_err().code(), "NotRunning");
    assert_eq!(a.put("a", Event::record(1u8)).unwrap_err().code(), "NotRunning");
}

#[test]
fn put_checks_plug_kind() {
    let log = Log::default();
    let mut a = linear(&log);
    a.start().unwrap();
    assert_eq!(a.put("a", Event::text("x")).unwrap_err().code(), "KindMismatch");
}

#[test]
fn state_machine() {
    let log = Log::default();
    let mut a = linear(&log);
    assert_eq!(a.stop().unwrap_err().code(), "InvalidStateTransition");
    a.start().unwrap();
    assert_eq!(a.state(), AssemblyState::Running);
    assert_eq!(a.start().unwrap_err().code(), "InvalidStateTransition");
    a.stop().unwrap();
    a.stop().unwrap();
    assert_eq!(a.state(), AssemblyState::Stopped);
    a.start().unwrap();
    assert_eq!(a.state(), AssemblyState::Running);
}

#[test]
fn stop_quiesces_sources() {
    let log = Log::default();
    let mut a = Assembly::new("t");
    let events = (0..5u32).map(Event::record).collect();
    a.add("src", Box::new(Ticker { remaining: events })).unwrap();
    a.add("sink", Probe::boxed("sink", Ports::sink(EventKind::Record), false, &log)).unwrap();
    a.wire("src", "sink").unwrap();
    a.start().unwrap();
    a.pump();
    a.pump();
    a.stop().unwrap();
    for _ in 0..10 {
        a.pump();
    }
    assert_eq!(log.lock().unwrap().len(), 2);
    a.start().unwrap();
    assert_eq!(a.run_until_quiescent(std::time::Duration::from_secs(1)), Some(3));
    assert_eq!(log.lock().unwrap().len(), 5);
}

#[test]
fn bus_with_one_registrant_passes_through() {
    let log = Log::default();
    let mut a = Assembly::new("t");
    a.add("bus", Box::new(EventBus::new())).unwrap();
    a.add("r", Probe::boxed("r", Ports::sink(EventKind::Record), false, &log)).unwrap();
    a.wire("bus", "r").unwrap();
    a.start().unwrap();
    let e = Event::record("x".to_string());
    a.bus_put("bus", e.clone()).unwrap();
    let got = log.lock().unwrap();
    assert_eq!(got.len(), 1);
    assert!(got[0].1.same_instance(&e));
}

#[test]
fn bus_with_no_registrants_discards() {
    let mut a = Assembly::new("t");
    a.add("bus", Box::new(EventBus::new())).unwrap();
    a.start().unwrap();
    a.bus_put("bus", Event::record(1u8)).unwrap();
    assert!(a.diagnostics().is_empty());
}

#[test]
fn bus_put_rejects_non_bus() {
    let log = Log::default();
    let mut a = linear(&log);
    a.start().unwrap();
    assert_eq!(a.bus_put("a", Event::record(1u8)).unwrap_err().code(), "NotAnEventBus");
}

#[test]
fn tap_sees_each_emission_once() {
    let log = Log::default();
    let mut a = linear(&log);
    a.wire("a", "b").unwrap();
    a.wire("b", "c").unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let s = seen.clone();
    a.set_tap(Box::new(move |t: TapEvent<'_>| s.lock().unwrap().push(t.component.to_string())));
    a.start().unwrap();
    a.emit("a", Event::record(1u8)).unwrap();
    // a emits (injected), b forwards; c emits nothing.
    assert_eq!(*seen.lock().unwrap(), ["a", "b"]);
}

#[test]
fn text_codec_adapters_round_trip() {
    let reg = CodecRegistry::with_text();
    let e = Event::text("hello");
    let r = adapt(&e, AdaptDirection::TextToRecord, TEXT_CODEC, &reg).unwrap();
    assert_eq!(r.downcast::<String>().map(String::as_str), Some("hello"));
    let back = adapt(&r, AdaptDirection::RecordToText, TEXT_CODEC, &reg).unwrap();
    assert_eq!(back.as_text(), Some("hello"));
    assert_eq!(
        adapt(&e, AdaptDirection::TextToRecord, "nope", &reg).unwrap_err().code(),
        "UnknownCodec"
    );
    assert_eq!(
        adapt(&e, AdaptDirection::RecordToText, TEXT_CODEC, &reg).unwrap_err().code(),
        "KindMismatch"
    );
    assert_eq!(
        adapt(&Event::record(3u8), AdaptDirection::RecordToText, TEXT_CODEC, &reg)
            .unwrap_err()
            .code(),
        "CodecFailure"
    );
}

#[test]
fn adapter_failure_becomes_diagnostic() {
    let log = Log::default();
    let reg = CodecRegistry::with_text();
    let mut a = Assembly::new("t");
    a.add("ad", Box::new(Adapter::new(AdaptDirection::RecordToText, TEXT_CODEC, &reg).unwrap()))
        .unwrap();
    a.add("sink", Probe::boxed("sink", Ports::sink(EventKind::Text), false, &log)).unwrap();
    a.wire("ad", "sink").unwrap();
    a.start().unwrap();
    a.put("ad", Event::record(5u64)).unwrap();
    assert!(log.lock().unwrap().is_empty());
    assert_eq!(a.diagnostics().len(), 1);
    assert_eq!(a.diagnostics()[0].component, "ad");
}

fn kind_of(b: bool) -> EventKind {
    if b {
        EventKind::Text
    } else {
        EventKind::Record
    }
}

proptest! {
    #[test]
    fn accepted_connections_are_kind_safe_and_acyclic(
        shapes in prop::collection::vec((0u8..4, 0u8..4), 2..8),
        edges in prop::collection::vec((0usize..8, 0usize..8, any::<bool>(), any::<bool>()), 0..40),
    ) {
        let log = Log::default();
        let mut a = Assembly::new("p");
        let set = |b: u8| match b { 0 => KindSet::NONE, 1 => KindSet::TEXT, 2 => KindSet::RECORD, _ => KindSet::BOTH };
        for (i, (p, s)) in shapes.iter().enumerate() {
            a.add(format!("n{i}"), Probe::boxed("n", Ports::new(set(*p), set(*s)), true, &log)).unwrap();
        }
        let n = shapes.len();
        for (x, y, kx, ky) in edges {
            let from = Port::socket(format!("n{}", x % n), kind_of(kx));
            let to = Port::plug(format!("n{}", y % n), kind_of(ky));
            if a.connect(&from, &to).is_ok() {
                prop_assert_eq!(from.kind, to.kind);
            }
            prop_assert!(!a.has_cycle());
        }
        for c in a.connections() {
            prop_assert_eq!(c.from.kind, c.to.kind);
        }
    }

    #[test]
    fn bus_fan_out_is_exactly_once_in_order(n in 0usize..6, m in 0usize..30) {
        let log = Log::default();
        let mut a = Assembly::new("bus");
        a.add("bus", Box::new(EventBus::new())).unwrap();
        for r in 0..n {
            let name = format!("r{r}");
            a.add(name.clone(), Probe::boxed(&name, Ports::sink(EventKind::Record), false, &log)).unwrap();
            a.wire("bus", &name).unwrap();
        }
        a.start().unwrap();
        for i in 0..m {
            a.bus_put("bus", Event::record(i)).unwrap();
        }
        let got = log.lock().unwrap();
        prop_assert_eq!(got.len(), n * m);
        for r in 0..n {
            let name = format!("r{r}");
            let seq: Vec<usize> = got.iter().filter(|(who, _)| *who == name)
                .map(|(_, e)| *e.downcast::<usize>().unwrap()).collect();
            prop_assert_eq!(seq, (0..m).collect::<Vec<_>>());
        }
        // Per put, registrants are visited in registration order.
        for (i, chunk) in got.chunks(n.max(1)).enumerate().take(m) {
            let order: Vec<String> = chunk.iter().map(|(w, _)| w.clone()).collect();
            let expected: Vec<String> = (0..n).map(|r| format!("r{r}")).collect();
            prop_assert_eq!(order, expected, "put {}", i);
        }
    }
}

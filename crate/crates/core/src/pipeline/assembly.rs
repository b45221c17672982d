use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::component::{Activity, Component, Direction, Outbox, Port, Ports};
use super::event::{Event, EventKind};
use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AssemblyState {
    Created,
    Running,
    Stopped,
}

impl fmt::Display for AssemblyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssemblyState::Created => "CREATED",
            AssemblyState::Running => "RUNNING",
            AssemblyState::Stopped => "STOPPED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub from: Port,
    pub to: Port,
}

/// Descriptive view of a component inside an assembly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentInfo {
    pub id: String,
    pub catalog_kind: String,
    pub params: BTreeMap<String, String>,
    pub ports: Vec<Port>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub component: String,
    pub message: String,
}

/// One observed emission, handed to the assembly's tap.
#[derive(Debug, Clone, Copy)]
pub struct TapEvent<'a> {
    pub component: &'a str,
    pub event: &'a Event,
}

pub type Tap = Box<dyn FnMut(TapEvent<'_>) + Send>;

const MAX_DIAGNOSTICS: usize = 1024;

struct Node {
    id: String,
    params: BTreeMap<String, String>,
    ports: Ports,
    inner: Box<dyn Component>,
    /// Downstream registrants per socket kind, in registration order.
    registrants: [Vec<usize>; 2],
}

fn kind_slot(kind: EventKind) -> usize {
    match kind {
        EventKind::Text => 0,
        EventKind::Record => 1,
    }
}

/// Totals from one pump round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PumpReport {
    pub emitted: usize,
    pub pending: bool,
}

/// A runnable pipeline of components.
///
/// Event delivery is synchronous and depth-first: when a component emits,
/// each registrant on the matching socket receives the event in
/// registration order, and that registrant's own emissions are fully
/// propagated before the next registrant sees the event.
pub struct Assembly {
    id: String,
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    connections: Vec<Connection>,
    state: AssemblyState,
    tap: Option<Tap>,
    diagnostics: Vec<Diagnostic>,
}

impl fmt::Debug for Assembly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Assembly")
            .field("id", &self.id)
            .field("components", &self.nodes.iter().map(|n| &n.id).collect::<Vec<_>>())
            .field("connections", &self.connections)
            .field("state", &self.state)
            .finish()
    }
}

impl Assembly {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            nodes: Vec::new(),
            index: HashMap::new(),
            connections: Vec::new(),
            state: AssemblyState::Created,
            tap: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> AssemblyState {
        self.state
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn components(&self) -> Vec<ComponentInfo> {
        self.nodes
            .iter()
            .map(|n| ComponentInfo {
                id: n.id.clone(),
                catalog_kind: n.inner.catalog_kind().to_string(),
                params: n.params.clone(),
                ports: ports_of(&n.id, n.ports),
            })
            .collect()
    }

    pub fn ports_of(&self, component: &str) -> Option<Ports> {
        self.index.get(component).map(|&i| self.nodes[i].ports)
    }

    pub fn catalog_kind_of(&self, component: &str) -> Option<&str> {
        self.index.get(component).map(|&i| self.nodes[i].inner.catalog_kind())
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn take_diagnostics(&mut self) -> Vec<Diagnostic> {
        std::mem::take(&mut self.diagnostics)
    }

    /// Installs an observer called once for every event any component emits.
    pub fn set_tap(&mut self, tap: Tap) {
        self.tap = Some(tap);
    }

    pub fn add(
        &mut self,
        id: impl Into<String>,
        component: Box<dyn Component>,
    ) -> Result<(), PipelineError> {
        self.add_with_params(id, BTreeMap::new(), component)
    }

    pub fn add_with_params(
        &mut self,
        id: impl Into<String>,
        params: BTreeMap<String, String>,
        component: Box<dyn Component>,
    ) -> Result<(), PipelineError> {
        self.require_editable()?;
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(PipelineError::DuplicateComponent(id));
        }
        let ports = component.ports();
        self.index.insert(id.clone(), self.nodes.len());
        self.nodes.push(Node {
            id,
            params,
            ports,
            inner: component,
            registrants: [Vec::new(), Vec::new()],
        });
        Ok(())
    }

    fn require_editable(&self) -> Result<(), PipelineError> {
        if self.state != AssemblyState::Created {
            return Err(PipelineError::AssemblyNotEditable(self.state));
        }
        Ok(())
    }

    fn lookup(&self, id: &str) -> Result<usize, PipelineError> {
        self.index.get(id).copied().ok_or_else(|| PipelineError::UnknownComponent(id.to_string()))
    }

    /// Registers `to` (a plug) with `from` (a socket).
    pub fn connect(&mut self, from: &Port, to: &Port) -> Result<Connection, PipelineError> {
        self.require_editable()?;
        let src = self.lookup(&from.component)?;
        let dst = self.lookup(&to.component)?;
        if from.direction != Direction::Socket {
            return Err(PipelineError::WrongDirection(from.clone()));
        }
        if to.direction != Direction::Plug {
            return Err(PipelineError::WrongDirection(to.clone()));
        }
        if from.kind != to.kind {
            return Err(PipelineError::KindMismatch { socket: from.kind, plug: to.kind });
        }
        if !self.nodes[src].ports.sockets.contains(from.kind) {
            return Err(PipelineError::PortNotFound(from.clone()));
        }
        if !self.nodes[dst].ports.plugs.contains(to.kind) {
            return Err(PipelineError::PortNotFound(to.clone()));
        }
        if self.nodes[src].registrants[kind_slot(from.kind)].contains(&dst) {
            return Err(PipelineError::DuplicateConnection {
                from: from.component.clone(),
                to: to.component.clone(),
            });
        }
        if src == dst || self.reaches(dst, src) {
            return Err(PipelineError::CycleWouldForm {
                from: from.component.clone(),
                to: to.component.clone(),
            });
        }
        self.nodes[src].registrants[kind_slot(from.kind)].push(dst);
        let conn = Connection { from: from.clone(), to: to.clone() };
        self.connections.push(conn.clone());
        debug_assert!(!self.has_cycle());
        Ok(conn)
    }

    /// Connects two components by id, using the unique kind that is both a
    /// socket of `from` and a plug of `to`.
    pub fn wire(&mut self, from: &str, to: &str) -> Result<Connection, PipelineError> {
        let (socket, plug) = self.infer_ports(from, to)?;
        self.connect(&socket, &plug)
    }

    pub fn infer_ports(&self, from: &str, to: &str) -> Result<(Port, Port), PipelineError> {
        let src = self.lookup(from)?;
        let dst = self.lookup(to)?;
        let common = self.nodes[src].ports.sockets.intersect(&self.nodes[dst].ports.plugs);
        let mut kinds = common.iter();
        match (kinds.next(), kinds.next()) {
            (Some(kind), None) => Ok((Port::socket(from, kind), Port::plug(to, kind))),
            (Some(_), Some(_)) => Err(PipelineError::AmbiguousPorts {
                from: from.to_string(),
                to: to.to_string(),
            }),
            (None, _) => {
                let socket = self.nodes[src].ports.sockets.iter().next();
                let plug = self.nodes[dst].ports.plugs.iter().next();
                match (socket, plug) {
                    (Some(socket), Some(plug)) => Err(PipelineError::KindMismatch { socket, plug }),
                    (None, _) => Err(PipelineError::PortNotFound(Port::socket(
                        from,
                        EventKind::Record,
                    ))),
                    (_, None) => {
                        Err(PipelineError::PortNotFound(Port::plug(to, EventKind::Record)))
                    }
                }
            }
        }
    }

    fn successors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes[node].registrants.iter().flatten().copied()
    }

    fn reaches(&self, start: usize, target: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend(self.successors(n));
        }
        false
    }

    /// Full DFS cycle check over the connection graph.
    pub fn has_cycle(&self) -> bool {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut marks = vec![Mark::New; self.nodes.len()];
        for root in 0..self.nodes.len() {
            if marks[root] != Mark::New {
                continue;
            }
            let mut stack: Vec<(usize, Vec<usize>)> = vec![(root, self.successors(root).collect())];
            marks[root] = Mark::Active;
            while let Some((node, pending)) = stack.last_mut() {
                match pending.pop() {
                    Some(next) => match marks[next] {
                        Mark::Active => return true,
                        Mark::New => {
                            marks[next] = Mark::Active;
                            let succ = self.successors(next).collect();
                            stack.push((next, succ));
                        }
                        Mark::Done => {}
                    },
                    None => {
                        marks[*node] = Mark::Done;
                        stack.pop();
                    }
                }
            }
        }
        false
    }

    pub fn start(&mut self) -> Result<(), PipelineError> {
        if self.state == AssemblyState::Running {
            return Err(PipelineError::InvalidStateTransition { from: self.state, op: "start" });
        }
        for i in 0..self.nodes.len() {
            if let Err(e) = self.nodes[i].inner.start() {
                for started in self.nodes[..i].iter_mut().rev() {
                    started.inner.stop();
                }
                return Err(PipelineError::StartFailed {
                    component: self.nodes[i].id.clone(),
                    reason: e.0,
                });
            }
        }
        self.state = AssemblyState::Running;
        Ok(())
    }

    pub fn stop(&mut self) -> Result<(), PipelineError> {
        match self.state {
            AssemblyState::Stopped => Ok(()),
            AssemblyState::Created => {
                Err(PipelineError::InvalidStateTransition { from: self.state, op: "stop" })
            }
            AssemblyState::Running => {
                for node in &mut self.nodes {
                    node.inner.stop();
                }
                self.state = AssemblyState::Stopped;
                Ok(())
            }
        }
    }

    fn require_running(&self) -> Result<(), PipelineError> {
        if self.state != AssemblyState::Running {
            return Err(PipelineError::NotRunning(self.state));
        }
        Ok(())
    }

    /// Propagates `event` as if `component` had emitted it.
    pub fn emit(&mut self, component: &str, event: Event) -> Result<(), PipelineError> {
        self.require_running()?;
        let idx = self.lookup(component)?;
        if !self.nodes[idx].ports.sockets.contains(event.kind()) {
            return Err(PipelineError::PortNotFound(Port::socket(component, event.kind())));
        }
        self.propagate(idx, vec![event]);
        Ok(())
    }

    /// Injects `event` into the plug of `component`.
    pub fn put(&mut self, component: &str, event: Event) -> Result<(), PipelineError> {
        self.require_running()?;
        let idx = self.lookup(component)?;
        let plugs = self.nodes[idx].ports.plugs;
        if !plugs.contains(event.kind()) {
            return match plugs.iter().next() {
                Some(plug) => Err(PipelineError::KindMismatch { socket: event.kind(), plug }),
                None => Err(PipelineError::PortNotFound(Port::plug(component, event.kind()))),
            };
        }
        self.deliver(idx, &event);
        Ok(())
    }

    /// Puts a record event onto an event bus component.
    pub fn bus_put(&mut self, bus: &str, event: Event) -> Result<(), PipelineError> {
        let idx = self.lookup(bus)?;
        if self.nodes[idx].inner.catalog_kind() != super::bus::EVENT_BUS_KIND {
            return Err(PipelineError::NotAnEventBus(bus.to_string()));
        }
        self.put(bus, event)
    }

    fn deliver(&mut self, target: usize, event: &Event) {
        let mut out = Outbox::default();
        let result = self.nodes[target].inner.put(event, &mut out);
        self.absorb(target, result.err().map(|e| e.0), &mut out);
        self.propagate(target, out.events);
    }

    fn propagate(&mut self, origin: usize, events: Vec<Event>) {
        for event in events {
            let kind = event.kind();
            if !self.nodes[origin].ports.sockets.contains(kind) {
                let msg = format!("emitted {kind} event without a {kind} socket; dropped");
                self.record(origin, msg);
                continue;
            }
            if let Some(tap) = self.tap.as_mut() {
                tap(TapEvent { component: &self.nodes[origin].id, event: &event });
            }
            // Registrants cannot change while running, so index iteration is stable.
            let count = self.nodes[origin].registrants[kind_slot(kind)].len();
            for r in 0..count {
                let target = self.nodes[origin].registrants[kind_slot(kind)][r];
                self.deliver(target, &event);
            }
        }
    }

    fn absorb(&mut self, node: usize, error: Option<String>, out: &mut Outbox) {
        for w in std::mem::take(&mut out.warnings) {
            self.record(node, w);
        }
        if let Some(e) = error {
            self.record(node, e);
        }
    }

    fn record(&mut self, node: usize, message: String) {
        let component = self.nodes[node].id.clone();
        log::warn!("assembly {} component {}: {}", self.id, component, message);
        if self.diagnostics.len() >= MAX_DIAGNOSTICS {
            self.diagnostics.remove(0);
        }
        self.diagnostics.push(Diagnostic { component, message });
    }

    /// Gives every source component one chance to emit.
    pub fn pump(&mut self) -> PumpReport {
        let mut report = PumpReport::default();
        if self.state != AssemblyState::Running {
            return report;
        }
        for i in 0..self.nodes.len() {
            if !self.nodes[i].inner.is_source() {
                continue;
            }
            let mut out = Outbox::default();
            let result = self.nodes[i].inner.pump(&mut out);
            match &result {
                Ok(Activity::Pending) => report.pending = true,
                Ok(_) => {}
                Err(_) => {}
            }
            report.emitted += out.events.len();
            self.absorb(i, result.err().map(|e| e.0), &mut out);
            self.propagate(i, out.events);
        }
        report
    }

    /// Pumps until a round emits nothing and no source has pending work, or
    /// until `timeout` elapses. Returns the number of events emitted by
    /// sources, or `None` on timeout.
    pub fn run_until_quiescent(&mut self, timeout: Duration) -> Option<usize> {
        let deadline = Instant::now() + timeout;
        let mut total = 0;
        loop {
            let report = self.pump();
            total += report.emitted;
            if report.emitted == 0 && !report.pending {
                return Some(total);
            }
            if Instant::now() >= deadline {
                return None;
            }
            if report.emitted == 0 {
                std::thread::sleep(Duration::from_millis(1));
            }
        }
    }
}

fn ports_of(id: &str, ports: Ports) -> Vec<Port> {
    ports
        .plugs
        .iter()
        .map(|k| Port::plug(id, k))
        .chain(ports.sockets.iter().map(|k| Port::socket(id, k)))
        .collect()
}

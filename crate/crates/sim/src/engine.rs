use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use gloss_core::{haversine, LatLongCoordinate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::SimMetrics;
use crate::topology::{validate_workload, Latency, SimMessage, TopologySpec};
use crate::SimError;

/// Runs abort with [`SimError::TooLarge`] past this many processed events.
pub const EVENT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum RoutingPolicy {
    Flood { ttl: u32 },
    GeoGreedy,
}

impl RoutingPolicy {
    pub fn flood(ttl: u32) -> Result<Self, SimError> {
        if ttl == 0 {
            return Err(SimError::ValidationFailure("ttl must be >= 1".into()));
        }
        Ok(RoutingPolicy::Flood { ttl })
    }

    pub fn geo_greedy() -> Self {
        RoutingPolicy::GeoGreedy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SimEventKind {
    Inject,
    Arrive,
    Drop,
}

/// One processed event, for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time: u64,
    pub seq: u64,
    pub kind: SimEventKind,
    pub node: String,
    pub msg_id: String,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-link random stream: the run seed, with the ChaCha stream chosen by
/// hashing the link's endpoints and its rank among parallel links.
pub fn link_rng(seed: u64, a: &str, b: &str, parallel_rank: usize) -> ChaCha8Rng {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let key = format!("{lo}\u{0}{hi}\u{0}{parallel_rank}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(key.as_bytes()));
    rng
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Inject { msg: usize },
    Arrive { msg: usize, node: usize, link: usize, hops: u32 },
    Drop { msg: usize, node: usize },
}

#[derive(Debug)]
struct Queued {
    time: u64,
    seq: u64,
    action: Action,
}

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(o.time, o.seq))
    }
}

struct Link {
    ends: [usize; 2],
    latency: Latency,
    loss: f64,
    max_payload: Option<u64>,
    rng: ChaCha8Rng,
}

struct Engine<'a> {
    workload: &'a [SimMessage],
    policy: RoutingPolicy,
    links: Vec<Link>,
    /// Per node: (link index, neighbour), in link order.
    adjacency: Vec<Vec<(usize, usize)>>,
    proc_delay: Vec<u64>,
    positions: Vec<Option<LatLongCoordinate>>,
    destination: Vec<Option<usize>>,
    node_ids: Vec<&'a str>,
    queue: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
    seen: HashSet<(usize, usize)>,
    delivered_to: HashSet<(usize, usize)>,
    addressed_injected: u64,
    addressed_delivered: u64,
    m: SimMetrics,
    trace: Option<&'a mut Vec<TraceRecord>>,
}

impl Engine<'_> {
    fn schedule(&mut self, time: u64, action: Action) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { time, seq, action }));
    }

    fn deliver(&mut self, msg: usize, node: usize, now: u64, hops: u32) {
        if !self.delivered_to.insert((msg, node)) {
            return;
        }
        let m = &self.workload[msg];
        self.m.delivered += 1;
        if !m.is_broadcast() {
            self.addressed_delivered += 1;
        }
        self.m.delivery_ids.push(m.msg_id.clone());
        self.m.latency_ms.push(now - m.inject_ms);
        self.m.hop_counts.push(hops);
    }

    /// Sends `msg` from `node` over `link`; the copy arrives with `hops`.
    fn transmit(&mut self, msg: usize, node: usize, link: usize, hops: u32, now: u64) {
        let size = self.workload[msg].size;
        let l = &mut self.links[link];
        if l.max_payload.is_some_and(|max| size > max) {
            self.m.dropped_oversize += 1;
            return;
        }
        self.m.transmissions += 1;
        let lost = l.rng.random::<f64>() < l.loss;
        let delay = match l.latency {
            Latency::Fixed(f) => f,
            Latency::Uniform([lo, hi]) => lo + l.rng.random::<f64>() * (hi - lo),
        };
        let to = if l.ends[0] == node { l.ends[1] } else { l.ends[0] };
        let at = now + self.proc_delay[node] + delay.round() as u64;
        if lost {
            self.schedule(at, Action::Drop { msg, node: to });
        } else {
            self.schedule(at, Action::Arrive { msg, node: to, link, hops });
        }
    }

    /// A node holding `msg` (arrived over `via`, or injected) decides what to do.
    fn handle(&mut self, msg: usize, node: usize, via: Option<usize>, hops: u32, now: u64) {
        if self.destination[msg] == Some(node) {
            self.deliver(msg, node, now, hops);
        }
        match self.policy {
            RoutingPolicy::Flood { ttl } => {
                if self.workload[msg].is_broadcast() && via.is_some() {
                    self.deliver(msg, node, now, hops);
                }
                if hops >= ttl {
                    return;
                }
                for i in 0..self.adjacency[node].len() {
                    let (link, _) = self.adjacency[node][i];
                    if Some(link) != via {
                        self.transmit(msg, node, link, hops + 1, now);
                    }
                }
            }
            RoutingPolicy::GeoGreedy => {
                let Some(dest) = self.destination[msg] else {
                    self.m.dropped_dead_end += 1;
                    return;
                };
                if dest == node {
                    return;
                }
                let target = self.positions[dest].expect("checked before run");
                let mut best = haversine(&self.positions[node].expect("checked before run"), &target);
                let mut choice = None;
                for &(link, nb) in &self.adjacency[node] {
                    let d = haversine(&self.positions[nb].expect("checked before run"), &target);
                    if d < best {
                        best = d;
                        choice = Some(link);
                    }
                }
                match choice {
                    Some(link) => self.transmit(msg, node, link, hops + 1, now),
                    None => self.m.dropped_dead_end += 1,
                }
            }
        }
    }

    fn record(&mut self, q: &Queued, kind: SimEventKind, node: usize, msg: usize) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(TraceRecord {
                time: q.time,
                seq: q.seq,
                kind,
                node: self.node_ids[node].to_string(),
                msg_id: self.workload[msg].msg_id.clone(),
            });
        }
    }

    fn run(mut self, horizon_ms: Option<u64>) -> Result<SimMetrics, SimError> {
        for msg in 0..self.workload.len() {
            self.schedule(self.workload[msg].inject_ms, Action::Inject { msg });
        }
        while let Some(Reverse(q)) = self.queue.pop() {
            if horizon_ms.is_some_and(|h| q.time > h) {
                self.m.in_flight = self.queue.len() as u64 + 1;
                break;
            }
            self.m.events_processed += 1;
            if self.m.events_processed > EVENT_BUDGET {
                return Err(SimError::TooLarge(EVENT_BUDGET));
            }
            match q.action {
                Action::Inject { msg } => {
                    let node = self.node_index_of_origin(msg);
                    self.record(&q, SimEventKind::Inject, node, msg);
                    self.m.injected += 1;
                    if self.destination[msg].is_some() {
                        self.addressed_injected += 1;
                    }
                    self.seen.insert((msg, node));
                    self.handle(msg, node, None, 0, q.time);
                }
                Action::Arrive { msg, node, link, hops } => {
                    self.record(&q, SimEventKind::Arrive, node, msg);
                    self.m.arrivals += 1;
                    let first = self.seen.insert((msg, node));
                    if !first {
                        self.m.duplicates_suppressed += 1;
                        continue;
                    }
                    self.handle(msg, node, Some(link), hops, q.time);
                }
                Action::Drop { msg, node } => {
                    self.record(&q, SimEventKind::Drop, node, msg);
                    self.m.dropped_loss += 1;
                }
            }
        }
        self.m.delivery_ratio = if self.addressed_injected == 0 {
            0.0
        } else {
            self.addressed_delivered as f64 / self.addressed_injected as f64
        };
        Ok(self.m)
    }

    fn node_index_of_origin(&self, msg: usize) -> usize {
        let origin = &self.workload[msg].origin;
        self.node_ids.iter().position(|id| id == origin).expect("validated")
    }
}

/// Runs the workload to completion or `horizon_ms`.
pub fn run(
    spec: &TopologySpec,
    workload: &[SimMessage],
    policy: RoutingPolicy,
    seed: u64,
    horizon_ms: Option<u64>,
) -> Result<SimMetrics, SimError> {
    run_inner(spec, workload, policy, seed, horizon_ms, None)
}

/// As [`run`], also returning every processed event in order.
pub fn run_traced(
    spec: &TopologySpec,
    workload: &[SimMessage],
    policy: RoutingPolicy,
    seed: u64,
    horizon_ms: Option<u64>,
) -> Result<(SimMetrics, Vec<TraceRecord>), SimError> {
    let mut trace = Vec::new();
    let m = run_inner(spec, workload, policy, seed, horizon_ms, Some(&mut trace))?;
    Ok((m, trace))
}

fn run_inner(
    spec: &TopologySpec,
    workload: &[SimMessage],
    policy: RoutingPolicy,
    seed: u64,
    horizon_ms: Option<u64>,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Result<SimMetrics, SimError> {
    spec.validate()?;
    validate_workload(spec, workload)?;
    if let RoutingPolicy::Flood { ttl: 0 } = policy {
        return Err(SimError::ValidationFailure("ttl must be >= 1".into()));
    }
    if let Some(h) = horizon_ms {
        if let Some(m) = workload.iter().find(|m| m.inject_ms > h) {
            return Err(SimError::ValidationFailure(format!("message '{}' injected after the horizon", m.msg_id)));
        }
    }
    let positions: Vec<Option<LatLongCoordinate>> = spec.nodes.iter().map(|n| n.position()).collect();
    if policy == RoutingPolicy::GeoGreedy {
        if let Some(n) = spec.nodes.iter().zip(&positions).find(|(_, p)| p.is_none()) {
            return Err(SimError::MissingPositions(n.0.id.clone()));
        }
    }

    let index: HashMap<&str, usize> = spec.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut adjacency = vec![Vec::new(); spec.nodes.len()];
    let mut parallel: HashMap<(usize, usize), usize> = HashMap::new();
    let mut links = Vec::with_capacity(spec.links.len());
    for (i, l) in spec.links.iter().enumerate() {
        let (a, b) = (index[l.a.as_str()], index[l.b.as_str()]);
        let rank = parallel.entry((a.min(b), a.max(b))).or_insert(0);
        links.push(Link {
            ends: [a, b],
            latency: l.latency,
            loss: l.loss,
            max_payload: l.max_payload,
            rng: link_rng(seed, &l.a, &l.b, *rank),
        });
        *rank += 1;
        adjacency[a].push((i, b));
        adjacency[b].push((i, a));
    }
    let destination = workload
        .iter()
        .map(|m| if m.is_broadcast() { None } else { Some(index[m.destination.as_str()]) })
        .collect();

    Engine {
        workload,
        policy,
        links,
        adjacency,
        proc_delay: spec.nodes.iter().map(|n| n.proc_delay_ms.unwrap_or(0)).collect(),
        positions,
        destination,
        node_ids: spec.nodes.iter().map(|n| n.id.as_str()).collect(),
        queue: BinaryHeap::new(),
        next_seq: 0,
        seen: HashSet::new(),
        delivered_to: HashSet::new(),
        addressed_injected: 0,
        addressed_delivered: 0,
        m: SimMetrics::default(),
        trace,
    }
    .run(horizon_ms)
}

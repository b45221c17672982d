//! The server-side knowledge base.
//!
//! Ingested fragments live on disk under `loaded/`, which is the durable
//! log; the in-memory graph is rebuilt from it on open.
//!
//! ```text
//! <data_dir>/inbox/        file sink target, polled by the watcher
//! <data_dir>/loaded/       accepted fragments
//! <data_dir>/quarantine/   rejected files plus `<name>.reason`
//! <data_dir>/delivered.jsonl
//! <data_dir>/{facilities,landmarks,hearsay,visibility}.jsonl
//! ```

mod knowledge;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub(crate) use knowledge::parse_jsonl;
pub use knowledge::{Audience, Facility, Hearsay, Knowledge, KnowledgeCounts, Landmark, VisibilityRecord};

use crate::transport::{xml_decode, LocationEvent, UserId};

pub const FACILITIES_FILE: &str = "facilities.jsonl";
pub const LANDMARKS_FILE: &str = "landmarks.jsonl";
pub const HEARSAY_FILE: &str = "hearsay.jsonl";
pub const VISIBILITY_FILE: &str = "visibility.jsonl";
const DELIVERED_FILE: &str = "delivered.jsonl";

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("invalid range: from {from} is after to {to}")]
    InvalidRange { from: String, to: String },
    #[error("{file}:{line}: {message}")]
    ParseFailure { file: String, line: usize, message: String },
    #[error("unknown hearsay '{0}'")]
    UnknownHearsay(String),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Io(_) => "IoFailure",
            StoreError::InvalidRange { .. } => "InvalidRange",
            StoreError::ParseFailure { .. } => "ParseFailure",
            StoreError::UnknownHearsay(_) => "UnknownHearsay",
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IngestOutcome {
    Loaded,
    Quarantined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub path: PathBuf,
    pub outcome: IngestOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl IngestReport {
    pub fn is_duplicate(&self) -> bool {
        self.reason.as_deref() == Some("duplicate")
    }
}

/// A hearsay item handed to a user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delivery {
    pub user: UserId,
    pub hearsay_id: String,
    pub message: String,
    #[serde(serialize_with = "ser_ts")]
    pub at: DateTime<Utc>,
}

fn ser_ts<S: serde::Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::transport::format_timestamp(t))
}

#[derive(Debug, Serialize, Deserialize)]
struct DeliveredLine {
    user: UserId,
    hearsay_id: String,
}

#[derive(Debug, Clone)]
struct Stored {
    seq: u64,
    event: LocationEvent,
}

#[derive(Debug, Default)]
struct Graph {
    events: HashMap<UserId, Vec<Stored>>,
    event_count: usize,
    knowledge: Arc<Knowledge>,
    delivered: BTreeSet<(UserId, String)>,
    deliveries: Vec<Delivery>,
}

impl Graph {
    fn insert(&mut self, seq: u64, event: LocationEvent) {
        let list = self.events.entry(event.user().clone()).or_default();
        let ts = event.timestamp();
        let at = list.partition_point(|s| (s.event.timestamp(), s.seq) <= (ts, seq));
        list.insert(at, Stored { seq, event });
        self.event_count += 1;
    }
}

#[derive(Debug, Default)]
struct IngestState {
    seen: HashSet<String>,
    next_seq: u64,
}

pub type IngestHook = Arc<dyn Fn(&Store, &LocationEvent) + Send + Sync>;

pub struct Store {
    root: PathBuf,
    graph: RwLock<Graph>,
    // Held for the whole of an ingest so hooks run serialized.
    ingest: Mutex<IngestState>,
    hook: RwLock<Option<IngestHook>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

fn listed(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let entry = entry.map_err(|e| io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with('.') || !entry.file_type().map(|t| t.is_file()).unwrap_or(false) {
            continue;
        }
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn move_file(from: &Path, to: &Path) -> Result<(), StoreError> {
    if fs::rename(from, to).is_ok() {
        return Ok(());
    }
    fs::copy(from, to).map_err(|e| io(to, e))?;
    fs::remove_file(from).map_err(|e| io(from, e))
}

impl Store {
    /// Opens (creating if needed) a store rooted at `data_dir`, loading any
    /// knowledge files present and replaying `loaded/`.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = data_dir.into();
        for sub in ["inbox", "loaded", "quarantine"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        }
        let store = Store {
            root,
            graph: RwLock::new(Graph::default()),
            ingest: Mutex::new(IngestState::default()),
            hook: RwLock::new(None),
        };
        store.load_knowledge_dir(&store.root.clone())?;
        store.replay()?;
        Ok(store)
    }

    fn replay(&self) -> Result<(), StoreError> {
        let mut state = self.ingest.lock().unwrap();
        let mut graph = self.graph.write().unwrap();
        for path in listed(&self.loaded_dir())? {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            state.seen.insert(name);
            let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            match xml_decode(&text) {
                Ok(event) => {
                    let seq = state.next_seq;
                    state.next_seq += 1;
                    graph.insert(seq, event);
                }
                Err(e) => log::warn!("{} in loaded/ no longer decodes: {e}", path.display()),
            }
        }
        for path in listed(&self.quarantine_dir())? {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            if !name.ends_with(".reason") {
                state.seen.insert(name);
            }
        }
        let delivered_path = self.root.join(DELIVERED_FILE);
        if delivered_path.exists() {
            let text = fs::read_to_string(&delivered_path).map_err(|e| io(&delivered_path, e))?;
            let ids: HashSet<&str> = graph.knowledge.hearsay.iter().map(|h| h.id.as_str()).collect();
            let mut restored = BTreeSet::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str::<DeliveredLine>(line) {
                    Ok(d) if ids.contains(d.hearsay_id.as_str()) => {
                        restored.insert((d.user, d.hearsay_id));
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("skipping bad line in {}: {e}", delivered_path.display()),
                }
            }
            graph.delivered = restored;
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn inbox_dir(&self) -> PathBuf {
        self.root.join("inbox")
    }

    pub fn loaded_dir(&self) -> PathBuf {
        self.root.join("loaded")
    }

    pub fn quarantine_dir(&self) -> PathBuf {
        self.root.join("quarantine")
    }

    /// Runs after every newly loaded event, while ingestion is held.
    pub fn set_ingest_hook(&self, hook: IngestHook) {
        *self.hook.write().unwrap() = Some(hook);
    }

    pub fn ingest_file(&self, path: &Path) -> Result<IngestReport, StoreError> {
        let name = path
            .file_name()
            .ok_or_else(|| StoreError::Io(format!("{}: not a file path", path.display())))?
            .to_string_lossy()
            .into_owned();
        let mut state = self.ingest.lock().unwrap();
        if state.seen.contains(&name) {
            if path.parent() == Some(self.inbox_dir().as_path()) {
                fs::remove_file(path).map_err(|e| io(path, e))?;
            }
            return Ok(IngestReport { path: path.to_path_buf(), outcome: IngestOutcome::Loaded, reason: Some("duplicate".into()) });
        }
        let text = fs::read(path).map_err(|e| io(path, e))?;
        let decoded = match String::from_utf8(text) {
            Ok(s) => xml_decode(&s).map_err(|e| format!("{}: {e}", e.code())),
            Err(_) => Err("MalformedXml: not UTF-8".to_string()),
        };
        match decoded {
            Ok(event) => {
                move_file(path, &self.loaded_dir().join(&name))?;
                state.seen.insert(name);
                self.insert_locked(&mut state, event);
                Ok(IngestReport { path: path.to_path_buf(), outcome: IngestOutcome::Loaded, reason: None })
            }
            Err(reason) => {
                let q = self.quarantine_dir();
                move_file(path, &q.join(&name))?;
                let reason_path = q.join(format!("{name}.reason"));
                fs::write(&reason_path, format!("{reason}\n")).map_err(|e| io(&reason_path, e))?;
                state.seen.insert(name);
                Ok(IngestReport { path: path.to_path_buf(), outcome: IngestOutcome::Quarantined, reason: Some(reason) })
            }
        }
    }

    fn insert_locked(&self, state: &mut IngestState, event: LocationEvent) {
        let seq = state.next_seq;
        state.next_seq += 1;
        self.graph.write().unwrap().insert(seq, event.clone());
        let hook = self.hook.read().unwrap().clone();
        if let Some(hook) = hook {
            hook(self, &event);
        }
    }

    /// Adds an event to the graph without a backing file. It is not
    /// persisted; the ingest hook runs as for a loaded file.
    pub fn record(&self, event: LocationEvent) {
        let mut state = self.ingest.lock().unwrap();
        self.insert_locked(&mut state, event);
    }

    /// Ingests everything in the inbox in filename order. Per-file I/O
    /// failures are logged and skipped.
    pub fn poll_once(&self) -> Result<Vec<IngestReport>, StoreError> {
        let mut reports = Vec::new();
        for path in listed(&self.inbox_dir())? {
            match self.ingest_file(&path) {
                Ok(r) => reports.push(r),
                Err(e) => log::error!("ingest {}: {e}", path.display()),
            }
        }
        Ok(reports)
    }

    pub fn event_count(&self) -> usize {
        self.graph.read().unwrap().event_count
    }

    pub fn users(&self) -> Vec<UserId> {
        let mut users: Vec<UserId> = self.graph.read().unwrap().events.keys().cloned().collect();
        users.sort();
        users
    }

    pub fn latest_location(&self, user: &UserId) -> Option<LocationEvent> {
        let g = self.graph.read().unwrap();
        g.events.get(user).and_then(|l| l.last()).map(|s| s.event.clone())
    }

    /// Events with `from <= timestamp <= to`; `None` leaves a side open.
    pub fn trail(
        &self,
        user: &UserId,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Result<Vec<LocationEvent>, StoreError> {
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(StoreError::InvalidRange { from: f.to_rfc3339(), to: t.to_rfc3339() });
            }
        }
        let g = self.graph.read().unwrap();
        let Some(list) = g.events.get(user) else { return Ok(Vec::new()) };
        let lo = from.map_or(0, |f| list.partition_point(|s| s.event.timestamp() < f));
        let hi = to.map_or(list.len(), |t| list.partition_point(|s| s.event.timestamp() <= t));
        Ok(list[lo..hi.max(lo)].iter().map(|s| s.event.clone()).collect())
    }

    pub fn knowledge(&self) -> Arc<Knowledge> {
        self.graph.read().unwrap().knowledge.clone()
    }

    /// Whether `observer` may see `target`'s position.
    pub fn visible_to(&self, target: &UserId, observer: &UserId) -> bool {
        self.graph.read().unwrap().knowledge.visibility.get(target).is_some_and(|a| a.admits(observer))
    }

    /// Replaces all four knowledge tables at once. On error nothing changes.
    pub fn load_knowledge(
        &self,
        facilities: &Path,
        landmarks: &Path,
        hearsay: &Path,
        visibility: &Path,
    ) -> Result<KnowledgeCounts, StoreError> {
        let k = knowledge::read_knowledge(Some(facilities), Some(landmarks), Some(hearsay), Some(visibility))?;
        Ok(self.swap_knowledge(k))
    }

    /// As [`Store::load_knowledge`] with the standard file names in `dir`;
    /// absent files read as empty tables.
    pub fn load_knowledge_dir(&self, dir: &Path) -> Result<KnowledgeCounts, StoreError> {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        let (f, l, h, v) = (opt(FACILITIES_FILE), opt(LANDMARKS_FILE), opt(HEARSAY_FILE), opt(VISIBILITY_FILE));
        let k = knowledge::read_knowledge(f.as_deref(), l.as_deref(), h.as_deref(), v.as_deref())?;
        Ok(self.swap_knowledge(k))
    }

    pub fn swap_knowledge(&self, k: Knowledge) -> KnowledgeCounts {
        let counts = k.counts();
        let mut g = self.graph.write().unwrap();
        let ids: HashSet<&str> = k.hearsay.iter().map(|h| h.id.as_str()).collect();
        g.delivered.retain(|(_, id)| ids.contains(id.as_str()));
        g.knowledge = Arc::new(k);
        counts
    }

    /// Records that `user` has been given `hearsay_id`; true if new.
    pub fn mark_delivered(&self, user: &UserId, hearsay_id: &str) -> Result<bool, StoreError> {
        let mut g = self.graph.write().unwrap();
        let Some(h) = g.knowledge.hearsay.iter().find(|h| h.id == hearsay_id).cloned() else {
            return Err(StoreError::UnknownHearsay(hearsay_id.to_string()));
        };
        if !g.delivered.insert((user.clone(), hearsay_id.to_string())) {
            return Ok(false);
        }
        g.deliveries.push(Delivery { user: user.clone(), hearsay_id: h.id, message: h.message, at: Utc::now() });
        drop(g);
        let line = serde_json::to_string(&DeliveredLine { user: user.clone(), hearsay_id: hearsay_id.to_string() })
            .expect("serializable");
        let path = self.root.join(DELIVERED_FILE);
        let appended = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = appended {
            log::error!("persisting delivery to {}: {e}", path.display());
        }
        Ok(true)
    }

    pub fn is_delivered(&self, user: &UserId, hearsay_id: &str) -> bool {
        self.graph.read().unwrap().delivered.contains(&(user.clone(), hearsay_id.to_string()))
    }

    /// Deliveries made since this process opened the store, oldest first.
    pub fn deliveries_for(&self, user: &UserId) -> Vec<Delivery> {
        self.graph.read().unwrap().deliveries.iter().filter(|d| &d.user == user).cloned().collect()
    }
}

/// Polls a store's inbox on a background thread until stopped or dropped.
pub struct Watcher {
    stop: Option<mpsc::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
    polls: Arc<AtomicU64>,
}

impl Watcher {
    pub fn spawn(store: Arc<Store>, interval: Duration) -> Self {
        let (tx, rx) = mpsc::channel::<()>();
        let polls = Arc::new(AtomicU64::new(0));
        let counter = polls.clone();
        let handle = thread::spawn(move || loop {
            if let Err(e) = store.poll_once() {
                log::error!("watcher poll: {e}");
            }
            counter.fetch_add(1, Ordering::SeqCst);
            match rx.recv_timeout(interval) {
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                _ => break,
            }
        });
        Self { stop: Some(tx), handle: Some(handle), polls }
    }

    /// Completed polls so far.
    pub fn polls(&self) -> u64 {
        self.polls.load(Ordering::SeqCst)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Watcher {
    fn drop(&mut self) {
        self.shutdown();
    }
}

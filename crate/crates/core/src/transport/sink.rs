use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};

use crate::clock::{self, Clock};
use crate::pipeline::{Component, ComponentError, Event, EventKind, Outbox, Ports};

pub const FILE_SINK_KIND: &str = "file_sink";

// Shared by every sink in the process so names never collide.
static SEQUENCE: AtomicU64 = AtomicU64::new(1);

/// `YYYYMMDD-HHMMSS.mmm-NNNN.xml`
pub fn stamped_name(t: &DateTime<Utc>, seq: u64) -> String {
    format!("{}-{:04}.xml", t.format("%Y%m%d-%H%M%S%.3f"), seq)
}

/// Writes each TEXT event to its own date-stamped file.
#[derive(Debug)]
pub struct FileSink {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    last: Option<DateTime<Utc>>,
    written: Vec<PathBuf>,
}

impl FileSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self::with_clock(dir, clock::system())
    }

    pub fn with_clock(dir: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Self {
        Self { dir: dir.into(), clock, last: None, written: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, content: &str) -> std::io::Result<PathBuf> {
        // Never step backwards, even if the clock does.
        let now = match self.last {
            Some(last) if self.clock.now() < last => last,
            _ => self.clock.now(),
        };
        self.last = Some(now);
        let seq = SEQUENCE.fetch_add(1, Ordering::Relaxed);
        let name = stamped_name(&now, seq);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        let target = self.dir.join(&name);
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
        drop(f);
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_file(&tmp);
            return Err(e);
        }
        Ok(target)
    }
}

impl Component for FileSink {
    fn catalog_kind(&self) -> &str {
        FILE_SINK_KIND
    }

    fn ports(&self) -> Ports {
        Ports::sink(EventKind::Text)
    }

    fn start(&mut self) -> Result<(), ComponentError> {
        if !self.dir.is_dir() {
            return Err(ComponentError::new(format!("IoFailure: {} is not a directory", self.dir.display())));
        }
        Ok(())
    }

    fn put(&mut self, event: &Event, _out: &mut Outbox) -> Result<(), ComponentError> {
        let Some(text) = event.as_text() else {
            return Err(ComponentError::new("file sink accepts TEXT events only"));
        };
        match self.write(text) {
            Ok(path) => {
                self.written.push(path);
                Ok(())
            }
            Err(e) => Err(ComponentError::new(format!("IoFailure: {}: {e}; event dropped", self.dir.display()))),
        }
    }
}

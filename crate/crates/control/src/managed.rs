use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use gloss_core::pipeline::{Assembly, AssemblyState, ComponentInfo, Connection, Diagnostic, PipelineError};
use serde::Serialize;

use crate::factory::AssemblySpecDoc;
use crate::tap::EventTap;

const IDLE_SLEEP: Duration = Duration::from_millis(5);

struct Driver {
    halt: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

/// An assembly owned by the control plane, pumped by its own driver thread
/// while RUNNING.
pub struct ManagedAssembly {
    pub id: String,
    pub spec: AssemblySpecDoc,
    assembly: Arc<Mutex<Assembly>>,
    tap: Arc<EventTap>,
    lifecycle: Mutex<Option<Driver>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssemblyView {
    pub id: String,
    pub state: AssemblyState,
    pub spec: AssemblySpecDoc,
    pub components: Vec<ComponentInfo>,
    pub connections: Vec<Connection>,
    pub diagnostics: Vec<Diagnostic>,
    pub events_observed: u64,
}

impl ManagedAssembly {
    pub fn new(spec: AssemblySpecDoc, mut assembly: Assembly, tap_capacity: usize) -> Self {
        let tap = Arc::new(EventTap::new(tap_capacity));
        let observer = tap.clone();
        assembly.set_tap(Box::new(move |t| observer.observe(t.component, t.event)));
        Self {
            id: assembly.id().to_string(),
            spec,
            assembly: Arc::new(Mutex::new(assembly)),
            tap,
            lifecycle: Mutex::new(None),
        }
    }

    pub fn tap(&self) -> &EventTap {
        &self.tap
    }

    pub fn state(&self) -> AssemblyState {
        self.assembly.lock().unwrap().state()
    }

    pub fn view(&self) -> AssemblyView {
        let a = self.assembly.lock().unwrap();
        AssemblyView {
            id: self.id.clone(),
            state: a.state(),
            spec: self.spec.clone(),
            components: a.components(),
            connections: a.connections().to_vec(),
            diagnostics: a.diagnostics().to_vec(),
            events_observed: self.tap.observed(),
        }
    }

    pub fn start(&self) -> Result<(), PipelineError> {
        let mut driver = self.lifecycle.lock().unwrap();
        self.assembly.lock().unwrap().start()?;
        let halt = Arc::new(AtomicBool::new(false));
        let (flag, assembly) = (halt.clone(), self.assembly.clone());
        let handle = thread::Builder::new()
            .name(format!("assembly-{}", self.id))
            .spawn(move || {
                while !flag.load(Ordering::Acquire) {
                    let report = assembly.lock().unwrap().pump();
                    if report.emitted == 0 {
                        thread::sleep(IDLE_SLEEP);
                    }
                }
            })
            .expect("spawn assembly driver");
        *driver = Some(Driver { halt, handle });
        Ok(())
    }

    /// Halts the driver, then stops the components. Live streams end.
    pub fn stop(&self) -> Result<(), PipelineError> {
        let mut driver = self.lifecycle.lock().unwrap();
        if let Some(d) = driver.take() {
            d.halt.store(true, Ordering::Release);
            let _ = d.handle.join();
        }
        let result = self.assembly.lock().unwrap().stop();
        if result.is_ok() {
            self.tap.close_streams();
        }
        result
    }
}

impl Drop for ManagedAssembly {
    fn drop(&mut self) {
        if let Ok(mut driver) = self.lifecycle.lock() {
            if let Some(d) = driver.take() {
                d.halt.store(true, Ordering::Release);
                let _ = d.handle.join();
            }
        }
    }
}

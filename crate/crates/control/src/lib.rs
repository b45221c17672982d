//! HTTP control plane: component catalog, assembly factory and lifecycle,
//! event taps, location queries and simulator runs.

pub mod api;
pub mod catalog;
pub mod error;
pub mod factory;
pub mod html;
pub mod managed;
pub mod tap;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use gloss_core::services::install_hearsay_hook;
use gloss_core::store::Watcher;

pub use api::{router, AppState, Config, SimulationRequest, DEFAULT_TTL};
pub use catalog::{catalog, CatalogEntry};
pub use error::{ApiError, ErrorBody};
pub use factory::{AssemblySpecDoc, ComponentSpec, ConnectionSpec, Factory, SpecError};
pub use tap::{EventTap, TapRecord, DEFAULT_TAP_CAPACITY};

/// Serves the API on `listener` with an inbox watcher running until shutdown.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    poll_interval: Duration,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    install_hearsay_hook(state.store());
    let watcher = Watcher::spawn(state.store().clone(), poll_interval);
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    log::info!("listening on {addr:?}");
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    watcher.stop();
    result
}

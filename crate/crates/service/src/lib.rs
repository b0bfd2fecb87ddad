//! HTTP interface to triage inference, explanations, what-if rescoring and
//! the population map. Models are loaded once and shared read-only.
//!
//! No authentication: this serves synthetic data only. Deploying on real
//! records needs the governance that trained clinical models require.

mod api;
mod error;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{
    apply_exclusions, router, Health, InstancePage, InstanceSummary, MapView, ModelInfo, TriageRequest, TriageResponse,
    API_SCHEMA_VERSION,
};
pub use error::{ApiError, ErrorBody, LoadError};
pub use state::{AppState, Artifacts, ServedModel, META_STRATEGY, META_STRATEGY_CONFIG};

/// Binds `addr` and serves until the process receives ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

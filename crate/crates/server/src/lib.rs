//! HTTP service and command-line front end for colonoscopy procedure
//! timelines. The domain logic lives in `colotag-core`.

pub mod api;
pub mod cli;
pub mod error;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

pub use api::router;
pub use error::ApiError;
pub use state::Registry;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot open data directory: {0}")]
    DataDir(#[from] colotag_core::store::StoreError),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs the HTTP API until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let registry = Arc::new(Registry::open(&config.data_dir)?);
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServeError::BindFailure {
            addr: config.addr,
            source,
        })?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), procedures = registry.ids().len(), "listening");
    let app = router(registry).layer(tower_http::trace::TraceLayer::new_for_http());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

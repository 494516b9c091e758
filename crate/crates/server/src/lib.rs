//! Session service: REST endpoints, a per-session WebSocket event stream,
//! append-only session logs and configuration.

pub mod api;
pub mod config;
pub mod remote;
pub mod service;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use config::{AdapterMode, ConfigError, ServiceConfig};
pub use service::{App, ServiceError};

/// Binds `config.listen`, reports the bound address through `on_bound` and
/// serves until interrupted.
pub async fn serve(
    config: ServiceConfig,
    on_bound: impl FnOnce(std::net::SocketAddr),
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let listen = config.listen;
    let app: Arc<App> = App::from_config(config)?;
    let listener = tokio::net::TcpListener::bind(listen).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

//! medsync server: HTTP API, peer sync client and the `medsync` CLI plumbing.

pub mod admin;
pub mod api;
pub mod auth;
pub mod config;
pub mod node;

use std::net::TcpListener;
use std::sync::Arc;

use axum_server::tls_rustls::RustlsConfig;

pub use config::Config;
pub use node::{system_clock, Clock, Node};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Node(#[from] node::NodeError),
    #[error("loading TLS material: {0}")]
    Tls(std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Installs the process-wide rustls crypto provider. Safe to call twice.
pub fn install_crypto_provider() {
    let _ = rustls::crypto::ring::default_provider().install_default();
}

/// Serves the API on `listener` until the task is dropped: HTTPS when the
/// config has TLS material, plain HTTP otherwise (test mode only, which
/// config validation enforces).
pub async fn serve_on(node: Arc<Node>, listener: TcpListener) -> Result<(), ServeError> {
    listener.set_nonblocking(true)?;
    let app = api::router(Arc::clone(&node)).into_make_service();
    match &node.config.tls {
        Some(tls) => {
            install_crypto_provider();
            let rustls = RustlsConfig::from_pem_file(&tls.cert, &tls.key)
                .await
                .map_err(ServeError::Tls)?;
            axum_server::from_tcp_rustls(listener, rustls).serve(app).await?;
        }
        None => axum_server::from_tcp(listener).serve(app).await?,
    }
    Ok(())
}

/// Opens the node, starts its background loops and serves until shutdown.
pub async fn serve(config: Config) -> Result<(), ServeError> {
    install_crypto_provider();
    let listener = TcpListener::bind(config.listen)?;
    let node = Arc::new(Node::open(config, system_clock())?);
    tracing::info!(server = %node.server_id(), addr = %listener.local_addr()?, "serving");
    let tasks = node.spawn_background();
    let outcome = serve_on(Arc::clone(&node), listener).await;
    for t in tasks {
        t.abort();
    }
    if let Err(e) = node.write_snapshot() {
        tracing::error!(error = %e, "final snapshot failed");
    }
    outcome
}

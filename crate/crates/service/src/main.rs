//! `caas-service`: listens on `$CAAS_LISTEN` (default `127.0.0.1:8080`).
//! `CAAS_IDLE_TIMEOUT_SECS` overrides the one-hour session expiry.

use std::time::Duration;

use caas_service::{serve, ServiceConfig, DEFAULT_LISTEN, LISTEN_ENV};
use tokio::net::TcpListener;

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let addr = std::env::var(LISTEN_ENV).unwrap_or_else(|_| DEFAULT_LISTEN.to_string());
    let mut config = ServiceConfig::default();
    if let Ok(secs) = std::env::var("CAAS_IDLE_TIMEOUT_SECS") {
        let secs: u64 = secs
            .parse()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("CAAS_IDLE_TIMEOUT_SECS: {e}")))?;
        config.idle_timeout = Duration::from_secs(secs);
    }
    let listener = TcpListener::bind(&addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve(listener, config).await
}

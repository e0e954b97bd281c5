//! HTTP and websocket host for skynav sessions: follower UI and remote
//! agents connect here, commanders fetch trajectory overviews.

mod config;
mod error;
mod routes;
mod state;

use std::time::{Duration, Instant};

use tokio::net::TcpListener;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use routes::router;
pub use state::{AppState, ClientRole, CreateSession, EnvEntry, SessionHandle, SessionSlot};

/// Loads environments and the dataset from `config` and serves until the
/// process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = config.addr()?;
    let state = AppState::load(config)?;
    let listener = TcpListener::bind(addr).await?;
    tracing::info!("listening on {addr}");
    serve_on(listener, state).await
}

pub async fn serve_on(listener: TcpListener, state: AppState) -> Result<(), ServiceError> {
    spawn_sweeper(state.clone());
    axum::serve(listener, router(state)).await?;
    Ok(())
}

fn spawn_sweeper(state: AppState) {
    let every = Duration::from_secs(state.config().sweep_interval_secs.max(1));
    let timeout = state.config().idle_timeout();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let dropped = state.sweep_idle(Instant::now(), timeout);
            if dropped > 0 {
                tracing::info!("dropped {dropped} idle sessions");
            }
        }
    });
}

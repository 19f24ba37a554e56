//! HTTP front end for the what-if engine.
//!
//! Datasets are uploaded as CSV, sessions bind a KPI/driver selection to a
//! trained model, and analysis endpoints run sensitivity, comparison,
//! per-row and goal-seeking requests against a session.

mod error;
mod routes;
mod store;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::Router;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use store::{Session, Store};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_BUDGET_CAP: usize = 200;
pub const DEFAULT_GOAL_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub snapshot_dir: Option<PathBuf>,
    /// Goal requests run at most this many evaluations.
    pub budget_cap: usize,
    pub goal_timeout: Duration,
    /// `None` allows any origin.
    pub cors_origin: Option<String>,
    /// Static UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    pub body_limit: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: DEFAULT_ADDR.parse().expect("default address"),
            snapshot_dir: None,
            budget_cap: DEFAULT_BUDGET_CAP,
            goal_timeout: DEFAULT_GOAL_TIMEOUT,
            cors_origin: None,
            static_dir: None,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }
}

pub struct AppState {
    pub store: Store,
    pub config: ServerConfig,
}

impl AppState {
    pub fn new(config: ServerConfig) -> io::Result<Self> {
        Ok(Self {
            store: Store::open(config.snapshot_dir.clone())?,
            config,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = match &state.config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(v),
            Err(_) => CorsLayer::new(),
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    let limit = state.config.body_limit;
    let static_dir = state.config.static_dir.clone();
    let mut app = routes::api().with_state(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(DefaultBodyLimit::max(limit)).layer(cors)
}

/// Binds `config.addr` and serves until Ctrl-C.
pub async fn serve(config: ServerConfig) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    let state = Arc::new(AppState::new(config)?);
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

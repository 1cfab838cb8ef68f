//! HTTP facade over the engine, used by the web workbench.
//!
//! All endpoints live under `/api` and speak JSON. Successful reads and
//! mutations answer `{revision, data}`; failures answer an [`ApiError`].
//! Interaction mutations must carry the revision the client last saw and
//! get a 409 when the project moved on.

mod engine;
mod error;
mod routes;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::HeaderValue;
use axum::Router;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

pub use engine::Engine;
pub use error::{ApiError, ErrorCode};
pub use routes::{
    BuildRunReport, GoalSummary, GoalView, PageView, ProjectSummary, Revisioned, StepsCount, TreeView, UnitBuild,
    REVISION_HEADER,
};

pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_PORT: u16 = 8787;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Workbench assets served for every path outside `/api`.
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origins; empty allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: DEFAULT_HOST.into(),
            port: DEFAULT_PORT,
            static_dir: None,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: io::Error,
    },
}

pub fn router(engine: Arc<Engine>, config: &ServiceConfig) -> Router {
    let cors = if config.cors_origins.is_empty() {
        CorsLayer::new().allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = config
            .cors_origins
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        CorsLayer::new().allow_origin(AllowOrigin::list(origins))
    }
    .allow_methods(Any)
    .allow_headers(Any)
    .expose_headers([axum::http::HeaderName::from_static(REVISION_HEADER)]);

    let app = Router::new().nest("/api", routes::api_router(engine));
    let app = match &config.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(|| async { ApiError::not_found("no such resource") }),
    };
    app.layer(cors)
}

/// A running service. Dropping it leaves the server running until the
/// runtime shuts down; call [`ServiceHandle::shutdown`] to stop it.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop accepting connections and wait for in-flight requests.
    pub async fn shutdown(mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.task.await.map_err(io::Error::other)?
    }

    /// Run until SIGINT or SIGTERM, then shut down gracefully.
    pub async fn run_until_signal(self) -> io::Result<()> {
        shutdown_signal().await;
        self.shutdown().await
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Bind and start serving in the background.
pub async fn serve(config: &ServiceConfig, engine: Arc<Engine>) -> Result<ServiceHandle, ServeError> {
    let addr = format!("{}:{}", config.host, config.port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::BindFailure {
            addr: addr.clone(),
            source,
        })?;
    let local = listener
        .local_addr()
        .map_err(|source| ServeError::BindFailure { addr, source })?;
    let app = router(engine, config);
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(ServiceHandle {
        addr: local,
        stop: Some(stop),
        task,
    })
}

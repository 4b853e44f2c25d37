//! HTTP/JSON and WebSocket front end for the simulation session.

mod routes;
pub mod session;

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use armsim_core::sim::{SessionLog, DEFAULT_TICK_RATE};
use armsim_core::RobotModel;
use axum::Router;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use routes::api_router;
pub use session::{spawn_session, SessionError, SessionHandle, SessionOptions, SessionTask};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8047";

pub struct ServiceConfig {
    pub model: Arc<RobotModel>,
    pub tick_rate: f64,
    pub record: Option<PathBuf>,
    pub replay: Option<SessionLog>,
    /// Static teleop UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(model: Arc<RobotModel>) -> Self {
        Self {
            model,
            tick_rate: DEFAULT_TICK_RATE,
            record: None,
            replay: None,
            ui_dir: None,
        }
    }
}

/// A started session plus the router that serves it.
pub struct Service {
    pub router: Router,
    pub handle: SessionHandle,
    pub task: SessionTask,
}

pub fn build(config: ServiceConfig) -> io::Result<Service> {
    if !(config.tick_rate > 0.0 && config.tick_rate.is_finite()) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("tick rate must be positive, got {}", config.tick_rate),
        ));
    }
    let record = config
        .record
        .as_deref()
        .map(|p| session::create_recorder(p, &config.model, config.tick_rate))
        .transpose()?;
    let opts = SessionOptions {
        tick_rate: config.tick_rate,
        record,
        replay: config.replay,
    };
    let (handle, task) = spawn_session(config.model, opts);
    let mut router = api_router(handle.clone());
    if let Some(dir) = config.ui_dir {
        router = router.fallback_service(ServeDir::new(dir));
    }
    Ok(Service {
        router,
        handle,
        task,
    })
}

/// Serves until `shutdown` resolves, then stops the loop and flushes any
/// recording.
pub async fn serve(
    config: ServiceConfig,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let service = build(config)?;
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, service.router)
        .with_graceful_shutdown(shutdown)
        .await?;
    service.task.stop().await
}

//! HTTP service behind the manual matching workflow.
//!
//! A session holds a cube, a reference RGB image and a control-point set that
//! the client edits click by click. Every edit bumps the session revision;
//! previews are rendered from a stride-downsampled copy of the cube and tagged
//! with the revision they reflect.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/sessions` | multipart `header`, `data`, `rgb`, optional `stride`, `sensor` |
//! | GET, DELETE | `/sessions/{id}` | |
//! | GET | `/sessions/{id}/images/hsi`, `/images/rgb` | downsampled display PNGs |
//! | GET, POST | `/sessions/{id}/points` | POST body `{"hsi": [x, y], "rgb": [x, y]}` |
//! | DELETE | `/sessions/{id}/points/{index}` | |
//! | GET | `/sessions/{id}/preview?since=r` | PNG, or 304 when `r` is current |
//! | GET | `/sessions/{id}/export` | control-point file |
//!
//! Errors are JSON `{"code", "message"}` bodies.

pub mod error;
pub mod routes;
pub mod session;

use std::sync::Arc;
use std::time::{Duration, Instant};

use spectra_core::MlsConfig;

pub use error::{ApiError, ErrorBody};
pub use routes::{router, Edit, NewPoint, NoPreview, PointList, SessionInfo, REVISION_HEADER};
pub use session::{Preview, PreviewOutcome, Session, SessionStore};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub preview_stride: usize,
    pub idle_expiry: Duration,
    pub mls: MlsConfig,
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            preview_stride: 4,
            idle_expiry: Duration::from_secs(30 * 60),
            mls: MlsConfig::default(),
            max_upload_bytes: 1 << 30,
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            sessions: SessionStore::new(config.idle_expiry),
            config,
        })
    }
}

/// Serves until the listener fails, sweeping idle sessions once a minute.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let sweeper = Arc::clone(&state);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.sessions.expire_idle(Instant::now());
        }
    });
    axum::serve(listener, router(state)).await
}

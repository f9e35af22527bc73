//! JSON-over-HTTP service for the incident store.
//!
//! Every route under `/api` except `POST /api/login` needs an
//! `Authorization: Bearer <token>` header naming a live session. What a
//! session may do is decided by the [`AccessPolicy`] capability matrix;
//! owner contact fields and raw alert text are dropped from responses to
//! roles that may not see them.

mod error;
mod routes;
mod views;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::Router;
use tower_http::services::ServeDir;

use uclog_core::auth::{AccessPolicy, Capability, Decision, PasswordHasher, Session, SessionManager};
use uclog_core::clock::{Clock, SystemClock};
use uclog_core::config::{Config, ConfigError};
use uclog_core::correlator::Correlator;
use uclog_core::ingest::{Ingestor, NoResolver, Resolver, SenderPolicy};
use uclog_core::store::{Store, StoreError};

pub use error::ApiError;
pub use views::Visibility;

/// Shared, cheaply cloned handles used by every request.
#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    sessions: Arc<SessionManager>,
    policy: AccessPolicy,
    correlator: Option<Arc<Correlator>>,
    resolver: Arc<dyn Resolver>,
    senders: SenderPolicy,
    clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(store: Arc<Store>) -> Self {
        Self {
            store,
            sessions: Arc::new(SessionManager::new(3600, PasswordHasher::default())),
            policy: AccessPolicy::default(),
            correlator: None,
            resolver: Arc::new(NoResolver),
            senders: SenderPolicy::default(),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_sessions(mut self, sessions: SessionManager) -> Self {
        self.sessions = Arc::new(sessions);
        self
    }

    pub fn with_policy(mut self, policy: AccessPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_correlator(mut self, correlator: Arc<Correlator>) -> Self {
        self.correlator = Some(correlator);
        self
    }

    pub fn with_ingest(mut self, resolver: Arc<dyn Resolver>, senders: SenderPolicy) -> Self {
        self.resolver = resolver;
        self.senders = senders;
        self
    }

    /// Clock for session expiry and report "now".
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Opens the configured store and wires ingestion, sessions and the
    /// correlator from the file.
    pub fn from_config(cfg: &Config, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        let store = Arc::new(Store::open(&cfg.store.path)?);
        let correlator = cfg.correlator(store.clone(), clock.clone())?;
        Ok(Self::new(store)
            .with_sessions(SessionManager::new(cfg.api.session_ttl_secs, cfg.password_hasher()))
            .with_policy(cfg.access_policy())
            .with_correlator(Arc::new(correlator))
            .with_ingest(cfg.resolver(), cfg.sender_policy())
            .with_clock(clock))
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    fn require(&self, session: &Session, capability: Capability) -> Result<(), ApiError> {
        match self.policy.authorize(session.role, capability) {
            Decision::Allow => Ok(()),
            Decision::Deny => Err(ApiError::forbidden()),
        }
    }

    fn visibility(&self, session: &Session) -> Visibility {
        let allowed = |c| self.policy.authorize(session.role, c) == Decision::Allow;
        Visibility {
            owner_contact: allowed(Capability::ViewOwnerContact),
            email_source: allowed(Capability::ViewEmailSource),
        }
    }

    fn ingestor(&self, actor: &str) -> Ingestor {
        Ingestor::new(self.store.clone(), self.resolver.clone(), self.senders.clone()).with_actor(actor)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("listener {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("static directory {0} does not exist")]
    StaticDir(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The caller's live session, taken from the bearer token.
pub struct Authed(pub Session);

impl FromRequestParts<AppState> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(ApiError::unauthenticated)?;
        state
            .sessions
            .validate(token, state.clock.now())
            .map(Authed)
            .ok_or_else(ApiError::unauthenticated)
    }
}

/// The API routes, plus the console bundle under `/` when a directory is given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new().nest("/api", routes::api()).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => app,
    }
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, listen: &str, static_dir: Option<PathBuf>) -> Result<(), ServerError> {
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            return Err(ServerError::StaticDir(dir.clone()));
        }
    }
    let listener = tokio::net::TcpListener::bind(listen).await.map_err(|source| ServerError::Bind {
        addr: listen.to_string(),
        source,
    })?;
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

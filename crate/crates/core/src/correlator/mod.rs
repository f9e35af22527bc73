//! On-demand correlation with flow logs that stay on their log servers.
//!
//! A search is turned into a command line from the source's template, run
//! through a [`CommandRunner`], and the returned lines are parsed and
//! filtered again locally. Results are cached on disk by request.

mod cache;
mod flow;
mod request;
mod source;
mod transport;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Condvar, Mutex};
use serde::Serialize;
use thiserror::Error;
use tracing::{debug, warn};

pub use cache::FlowCache;
pub use flow::{is_skippable, parse_flow_line, FlowParseError, FlowRecord, Protocol, FLAGS_MAX};
pub use request::{
    parse_ip_literal, parse_port_literal, parse_time_literal, valid_source_id, SearchRequest, WindowKind,
    DEFAULT_MAX_RECORDS,
};
pub use source::{build_search_command, shell_quote, LogSource, TransportKind, PLACEHOLDERS};
pub use transport::{CommandOutput, CommandRunner, LocalRunner, SshRunner, StubRunner};

use crate::clock::{Clock, SystemClock};
use crate::store::{AuditAction, AuditEntry, IncidentId, Store};

pub const DEFAULT_MAX_PARALLEL_PER_SOURCE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorrelatorError {
    #[error("unknown log source {0:?}")]
    UnknownSource(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("rejected: {0}")]
    InjectionRejected(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unknown incident {0}")]
    UnknownIncident(IncidentId),
    #[error("host {0} has no known address")]
    UnresolvedHost(String),
    #[error("store: {0}")]
    Store(String),
}

impl From<crate::store::StoreError> for CorrelatorError {
    fn from(e: crate::store::StoreError) -> Self {
        CorrelatorError::Store(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub request: SearchRequest,
    pub records: Vec<FlowRecord>,
    /// More records matched than `max_records`.
    pub truncated: bool,
    pub fetched_at: DateTime<Utc>,
    pub from_cache: bool,
    /// Returned lines that could not be parsed.
    pub parse_errors: usize,
}

/// Counting semaphore bounding runs per source.
#[derive(Default)]
struct Gate {
    used: Mutex<usize>,
    freed: Condvar,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn acquire(&self, max: usize) -> GateGuard<'_> {
        let mut used = self.used.lock();
        while *used >= max {
            self.freed.wait(&mut used);
        }
        *used += 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock() -= 1;
        self.0.freed.notify_one();
    }
}

/// A remote execution that concurrent identical requests wait on.
#[derive(Default)]
struct Flight {
    outcome: Mutex<Option<Result<SearchResult, CorrelatorError>>>,
    done: Condvar,
}

pub struct Correlator {
    sources: BTreeMap<String, LogSource>,
    cache: FlowCache,
    local: Arc<dyn CommandRunner>,
    remote: Arc<dyn CommandRunner>,
    store: Option<Arc<Store>>,
    clock: Arc<dyn Clock>,
    max_parallel: usize,
    gates: Mutex<HashMap<String, Arc<Gate>>>,
    flights: Mutex<HashMap<String, Arc<Flight>>>,
}

impl Correlator {
    pub fn new(sources: impl IntoIterator<Item = LogSource>, cache: FlowCache) -> Result<Self, CorrelatorError> {
        let mut map = BTreeMap::new();
        for s in sources {
            s.validate()?;
            map.insert(s.source_id.clone(), s);
        }
        Ok(Self {
            sources: map,
            cache,
            local: Arc::new(LocalRunner),
            remote: Arc::new(SshRunner::default()),
            store: None,
            clock: Arc::new(SystemClock),
            max_parallel: DEFAULT_MAX_PARALLEL_PER_SOURCE,
            gates: Mutex::new(HashMap::new()),
            flights: Mutex::new(HashMap::new()),
        })
    }

    /// Uses one runner for local and remote sources alike.
    pub fn with_runner(mut self, runner: Arc<dyn CommandRunner>) -> Self {
        self.local = runner.clone();
        self.remote = runner;
        self
    }

    pub fn with_remote_runner(mut self, runner: Arc<dyn CommandRunner>) -> Self {
        self.remote = runner;
        self
    }

    /// Searches and drill-downs are audited in this store; drill-downs read
    /// incidents from it.
    pub fn with_store(mut self, store: Arc<Store>) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_max_parallel(mut self, n: usize) -> Self {
        self.max_parallel = n.max(1);
        self
    }

    pub fn sources(&self) -> impl Iterator<Item = &LogSource> {
        self.sources.values()
    }

    pub fn source(&self, id: &str) -> Option<&LogSource> {
        self.sources.get(id)
    }

    pub fn cache(&self) -> &FlowCache {
        &self.cache
    }

    pub fn execute_search(&self, req: &SearchRequest, actor: &str) -> Result<SearchResult, CorrelatorError> {
        let source = self
            .sources
            .get(&req.source_id)
            .ok_or_else(|| CorrelatorError::UnknownSource(req.source_id.clone()))?;
        let command = build_search_command(source, req)?;

        if let Some(hit) = self.cache.lookup(req, self.clock.now()) {
            self.audit(actor, &hit);
            return Ok(hit);
        }

        let key = req.canonical_key();
        let (flight, leader) = {
            let mut flights = self.flights.lock();
            match flights.get(&key) {
                Some(f) => (f.clone(), false),
                None => {
                    let f = Arc::new(Flight::default());
                    flights.insert(key.clone(), f.clone());
                    (f, true)
                }
            }
        };

        if !leader {
            let mut outcome = flight.outcome.lock();
            while outcome.is_none() {
                flight.done.wait(&mut outcome);
            }
            let result = outcome.clone().expect("flight finished");
            if let Ok(r) = &result {
                self.audit(actor, r);
            }
            return result;
        }

        let result = match self.cache.lookup(req, self.clock.now()) {
            Some(hit) => Ok(hit),
            None => self.fetch(source, req, &command),
        };
        *flight.outcome.lock() = Some(result.clone());
        flight.done.notify_all();
        self.flights.lock().remove(&key);
        if let Ok(r) = &result {
            self.audit(actor, r);
        }
        result
    }

    fn gate(&self, source_id: &str) -> Arc<Gate> {
        self.gates.lock().entry(source_id.to_string()).or_default().clone()
    }

    fn fetch(&self, source: &LogSource, req: &SearchRequest, command: &str) -> Result<SearchResult, CorrelatorError> {
        let argv = shlex::split(command)
            .ok_or_else(|| CorrelatorError::Template(format!("unbalanced quoting in {command:?}")))?;
        let (runner, endpoint) = match source.transport {
            TransportKind::Local => (&self.local, None),
            TransportKind::Remote => (&self.remote, source.endpoint.as_deref()),
        };
        let gate = self.gate(&source.source_id);
        let output = {
            let _slot = gate.acquire(self.max_parallel);
            debug!(source = %source.source_id, %command, "running search");
            runner
                .run(endpoint, &argv)
                .map_err(|e| CorrelatorError::Transport(format!("{}: {e}", source.source_id)))?
        };
        if output.status != 0 {
            return Err(CorrelatorError::Transport(format!(
                "{} exited with status {}: {}",
                source.source_id,
                output.status,
                output.stderr.trim()
            )));
        }

        let mut records = Vec::new();
        let (mut matched, mut parse_errors) = (0usize, 0usize);
        for line in output.stdout.lines().filter(|l| !is_skippable(l)) {
            match parse_flow_line(line) {
                Ok(r) if req.matches(&r) => {
                    matched += 1;
                    if records.len() < req.max_records {
                        records.push(r);
                    }
                }
                Ok(_) => {}
                Err(_) => parse_errors += 1,
            }
        }
        let result = SearchResult {
            request: req.clone(),
            records,
            truncated: matched > req.max_records,
            fetched_at: self.clock.now(),
            from_cache: false,
            parse_errors,
        };
        if let Err(e) = self.cache.store(&result, source.cache_ttl) {
            warn!(source = %source.source_id, error = %e, "could not cache search result");
        }
        Ok(result)
    }

    fn audit(&self, actor: &str, r: &SearchResult) {
        let Some(store) = &self.store else { return };
        let entry = AuditEntry {
            timestamp: self.clock.now(),
            actor: actor.to_string(),
            action: AuditAction::Search,
            entity: format!("flows:{}", r.request.source_id),
            detail: format!(
                "{} records={} truncated={} cached={}",
                r.request.canonical_key(),
                r.records.len(),
                r.truncated,
                r.from_cache
            ),
        };
        if let Err(e) = store.record_audit(&entry) {
            warn!(error = %e, "could not audit search");
        }
    }

    /// Request for the flows around an incident: its host's address over
    /// `[date - span, date + span)`.
    pub fn incident_request(
        &self,
        incident_id: IncidentId,
        source_id: &str,
        kind: WindowKind,
    ) -> Result<SearchRequest, CorrelatorError> {
        let store = self
            .store
            .as_ref()
            .ok_or_else(|| CorrelatorError::Store("no incident store attached".into()))?;
        let incident = store
            .get_incident(incident_id)?
            .ok_or(CorrelatorError::UnknownIncident(incident_id))?;
        let host = store
            .get_host(incident.host)?
            .ok_or_else(|| CorrelatorError::Store(format!("incident {incident_id} has no host row")))?;
        let ip = host.ip.ok_or(CorrelatorError::UnresolvedHost(host.name))?;
        SearchRequest::new(source_id, ip, None, incident.date - kind.span(), incident.date + kind.span())
    }

    pub fn correlate_incident_flows(
        &self,
        incident_id: IncidentId,
        source_id: &str,
        kind: WindowKind,
        actor: &str,
    ) -> Result<SearchResult, CorrelatorError> {
        let req = self.incident_request(incident_id, source_id, kind)?;
        if !self.sources.contains_key(source_id) {
            return Err(CorrelatorError::UnknownSource(source_id.to_string()));
        }
        self.execute_search(&req, actor)
    }
}

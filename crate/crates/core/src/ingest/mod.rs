//! Alert ingestion: parse inbound alert messages, validate the sender,
//! resolve the host, and insert email, host, type and incident rows.

mod parse;
mod resolve;
mod sweep;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use parse::{parse_alert_email, parse_iso_time, AlertMessage};
pub use resolve::{resolve_host, NoResolver, ResolvedHost, Resolver, StaticResolver, SystemResolver};
pub use sweep::{DropLayout, IngestReport, Rejection};

use crate::digest::sha256_hex;
use crate::store::{EmailId, Incident, IncidentId, NewEmail, NewIncident, SenderVerdict, Store, StoreError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unauthorized sender: {0}")]
    Unauthorized(String),
    #[error("drop directory is locked by another sweeper ({0})")]
    Busy(String),
    #[error("message already stored as email {0} without an incident")]
    OrphanDuplicate(EmailId),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Optional cryptographic check run after the allow-list.
pub trait SignatureCheck: Send + Sync {
    fn verify(&self, msg: &AlertMessage) -> bool;
}

/// Who may submit alerts. With no allow-list configured every sender is
/// accepted and the stored verdict is `unchecked`.
#[derive(Clone, Default)]
pub struct SenderPolicy {
    pub allowed_senders: Option<Vec<String>>,
    pub signature: Option<Arc<dyn SignatureCheck>>,
}

impl std::fmt::Debug for SenderPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SenderPolicy")
            .field("allowed_senders", &self.allowed_senders)
            .field("signature", &self.signature.is_some())
            .finish()
    }
}

/// Extracts the bare address from `Name <addr>` or `addr`.
fn mailbox(from: &str) -> &str {
    match (from.find('<'), from.rfind('>')) {
        (Some(a), Some(b)) if a < b => from[a + 1..b].trim(),
        _ => from.trim(),
    }
}

impl SenderPolicy {
    pub fn allow_list<I: IntoIterator<Item = S>, S: Into<String>>(senders: I) -> Self {
        Self {
            allowed_senders: Some(senders.into_iter().map(Into::into).collect()),
            signature: None,
        }
    }

    pub fn validate(&self, msg: &AlertMessage) -> Result<SenderVerdict, IngestError> {
        let Some(allowed) = &self.allowed_senders else {
            return Ok(SenderVerdict::Unchecked);
        };
        let from = msg
            .header("From")
            .map(mailbox)
            .ok_or_else(|| IngestError::Unauthorized("no From header".into()))?;
        if !allowed.iter().any(|a| a.eq_ignore_ascii_case(from)) {
            return Err(IngestError::Unauthorized(format!("{from} is not an allowed sender")));
        }
        match &self.signature {
            None => Ok(SenderVerdict::Allowed),
            Some(check) if check.verify(msg) => Ok(SenderVerdict::Signed),
            Some(_) => Err(IngestError::Unauthorized(format!("signature check failed for {from}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestOutcome {
    pub incident: Incident,
    /// The message had been ingested before; nothing was written.
    pub deduplicated: bool,
    pub new_host: bool,
    pub new_type: bool,
}

pub struct Ingestor {
    store: Arc<Store>,
    resolver: Arc<dyn Resolver>,
    policy: SenderPolicy,
    actor: String,
}

impl Ingestor {
    pub fn new(store: Arc<Store>, resolver: Arc<dyn Resolver>, policy: SenderPolicy) -> Self {
        Self {
            store,
            resolver,
            policy,
            actor: "ingest".to_string(),
        }
    }

    /// Sets the name written to the audit trail for rows this ingestor creates.
    pub fn with_actor(mut self, actor: impl Into<String>) -> Self {
        self.actor = actor.into();
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Parse, validate and ingest one raw message.
    pub fn ingest_raw(&self, raw: &str) -> Result<IngestOutcome, IngestError> {
        let msg = parse_alert_email(raw).map_err(IngestError::Parse)?;
        let verdict = self.policy.validate(&msg)?;
        self.ingest_validated(&msg, verdict)
    }

    /// Ingests a parsed message, checking the sender policy first.
    pub fn ingest_alert(&self, msg: &AlertMessage) -> Result<IngestOutcome, IngestError> {
        let verdict = self.policy.validate(msg)?;
        self.ingest_validated(msg, verdict)
    }

    fn ingest_validated(&self, msg: &AlertMessage, verdict: SenderVerdict) -> Result<IngestOutcome, IngestError> {
        let digest = sha256_hex(msg.raw.as_bytes());
        if let Some(done) = self.existing(&digest)? {
            return Ok(done);
        }

        let host = resolve_host(msg.host(), self.resolver.as_ref());
        let comments = incident_comments(msg);
        let subject = msg.header("Subject").unwrap_or_default().to_string();

        let outcome = self.store.transaction(&self.actor, |tx| {
            // re-check under the writer lock; a concurrent sweeper may have won
            if let Some(email) = tx.email_by_digest(&digest)? {
                return Ok(Err(email.email_id));
            }
            let (host, new_host) = tx.upsert_host(&host.name, host.ip, None)?;
            let (ty, new_type) = tx.upsert_type(msg.alert_type(), None)?;
            let email = tx.insert_email(NewEmail {
                date: msg.time.date_naive(),
                source: msg.raw.clone(),
                comments: subject.clone(),
                verdict,
            })?;
            let incident = tx.insert_incident(NewIncident {
                date: msg.time,
                host: host.host_id,
                incident_type: ty.type_id,
                email: email.email_id,
                comments: comments.clone(),
            })?;
            Ok(Ok(IngestOutcome {
                incident,
                deduplicated: false,
                new_host,
                new_type,
            }))
        })?;
        match outcome {
            Ok(o) => Ok(o),
            Err(id) => self.existing(&digest)?.ok_or(IngestError::OrphanDuplicate(id)),
        }
    }

    fn existing(&self, digest: &str) -> Result<Option<IngestOutcome>, IngestError> {
        let Some(email) = self.store.email_by_digest(digest)? else {
            return Ok(None);
        };
        let incident = self
            .store
            .incident_by_email(email.email_id)?
            .ok_or(IngestError::OrphanDuplicate(email.email_id))?;
        Ok(Some(IngestOutcome {
            incident,
            deduplicated: true,
            new_host: false,
            new_type: false,
        }))
    }

    /// Stores a follow-up message between engineers as an email record and
    /// references it from the incident's comments. No new incident is made.
    pub fn attach_followup(&self, incident_id: IncidentId, raw: &str) -> Result<Incident, IngestError> {
        let date = parse_alert_email(raw)
            .ok()
            .map(|m| m.time.date_naive())
            .or_else(|| {
                raw.lines()
                    .take_while(|l| !l.trim().is_empty())
                    .find_map(|l| l.strip_prefix("Date:"))
                    .and_then(|d| chrono::DateTime::parse_from_rfc2822(d.trim()).ok())
                    .map(|d| d.date_naive())
            })
            .unwrap_or_else(|| chrono::Utc::now().date_naive());
        Ok(self.store.transaction(&self.actor, |tx| {
            let incident = tx
                .get_incident(incident_id)?
                .ok_or_else(|| StoreError::NotFound(format!("incident {incident_id}")))?;
            let email = tx.insert_email(NewEmail {
                date,
                source: raw.to_string(),
                comments: format!("follow-up to incident {incident_id}"),
                verdict: SenderVerdict::Unchecked,
            })?;
            let mut comments = incident.comments.clone();
            if !comments.is_empty() {
                comments.push('\n');
            }
            comments.push_str(&format!("[follow-up email:{}]", email.email_id));
            tx.update_incident_comments(incident_id, &comments)
        })?)
    }
}

fn incident_comments(msg: &AlertMessage) -> String {
    let mut parts = Vec::new();
    if let Some(d) = msg.field("DETAIL") {
        parts.push(d.to_string());
    }
    if let Some(s) = msg.field("SRC_IP") {
        parts.push(format!("src_ip={s}"));
    }
    if let Some(p) = msg.field("DST_PORT") {
        parts.push(format!("dst_port={p}"));
    }
    parts.join("; ")
}

#[cfg(test)]
mod tests;

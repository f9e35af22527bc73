use std::fmt;
use std::net::Ipv4Addr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

pub const HOST_NAME_MAX: usize = 30;
pub const OWNER_FIELD_MAX: usize = 35;
pub const TYPE_NAME_MAX: usize = 25;
pub const TYPE_DESCRIPTION_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmailId(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IncidentId(pub i64);

macro_rules! id_display {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}
id_display!(HostId, TypeId, EmailId, IncidentId);

/// Contact details of the person responsible for a host.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Owner {
    pub name: Option<String>,
    pub email: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub host_id: HostId,
    pub name: String,
    pub ip: Option<Ipv4Addr>,
    pub owner_name: Option<String>,
    pub owner_email: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentType {
    pub type_id: TypeId,
    pub name: String,
    pub description: String,
}

/// Outcome of sender validation at ingestion time. Only the verdict is kept,
/// never the signature material itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenderVerdict {
    /// No sender policy was configured.
    Unchecked,
    /// From address matched the allow-list.
    Allowed,
    /// Allow-list matched and the signature hook accepted the message.
    Signed,
    /// Entered by hand, not from an inbound message.
    Manual,
}

impl SenderVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            SenderVerdict::Unchecked => "unchecked",
            SenderVerdict::Allowed => "allowed",
            SenderVerdict::Signed => "signed",
            SenderVerdict::Manual => "manual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "unchecked" => SenderVerdict::Unchecked,
            "allowed" => SenderVerdict::Allowed,
            "signed" => SenderVerdict::Signed,
            "manual" => SenderVerdict::Manual,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailRecord {
    pub email_id: EmailId,
    pub date: NaiveDate,
    pub source: String,
    pub comments: String,
    /// Hex SHA-256 of `source`, used to skip re-ingestion of identical messages.
    pub digest: String,
    pub verdict: SenderVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEmail {
    pub date: NaiveDate,
    pub source: String,
    pub comments: String,
    pub verdict: SenderVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub incident_id: IncidentId,
    pub date: DateTime<Utc>,
    pub host: HostId,
    pub incident_type: TypeId,
    pub email: EmailId,
    pub comments: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewIncident {
    pub date: DateTime<Utc>,
    pub host: HostId,
    pub incident_type: TypeId,
    pub email: EmailId,
    pub comments: String,
}

/// An incident joined with its host and type, the shape of the pre-defined
/// incident listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentRow {
    pub incident_id: IncidentId,
    pub date: DateTime<Utc>,
    pub host: Host,
    pub incident_type: IncidentType,
    pub email_id: EmailId,
    pub comments: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IncidentFilter {
    pub host_name: Option<String>,
    pub type_name: Option<String>,
    /// Inclusive lower bound.
    pub from: Option<DateTime<Utc>>,
    /// Exclusive upper bound.
    pub to: Option<DateTime<Utc>>,
    pub limit: Option<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Insert,
    Update,
    Delete,
    Login,
    Search,
}

impl AuditAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditAction::Insert => "insert",
            AuditAction::Update => "update",
            AuditAction::Delete => "delete",
            AuditAction::Login => "login",
            AuditAction::Search => "search",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "insert" => AuditAction::Insert,
            "update" => AuditAction::Update,
            "delete" => AuditAction::Delete,
            "login" => AuditAction::Login,
            "search" => AuditAction::Search,
            _ => return None,
        })
    }

    pub fn is_mutation(self) -> bool {
        matches!(self, AuditAction::Insert | AuditAction::Update | AuditAction::Delete)
    }
}

impl fmt::Display for AuditAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub action: AuditAction,
    /// Affected record, e.g. `incident:42`.
    pub entity: String,
    pub detail: String,
}

impl AuditEntry {
    pub fn now(actor: &str, action: AuditAction, entity: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            timestamp: crate::clock::truncate_to_second(Utc::now()),
            actor: actor.to_string(),
            action,
            entity: entity.into(),
            detail: detail.into(),
        }
    }
}

/// Row counts per table, used by ingestion tallies and invariant checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StoreCounts {
    pub hosts: u64,
    pub types: u64,
    pub emails: u64,
    pub incidents: u64,
    pub audit: u64,
}

//! Response bodies. Fields a role may not see are left out of the JSON
//! entirely rather than sent as null.

use std::net::Ipv4Addr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::Serialize;

use uclog_core::store::{EmailRecord, Host, IncidentRow, IncidentType, SenderVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visibility {
    pub owner_contact: bool,
    pub email_source: bool,
}

#[derive(Debug, Serialize)]
pub struct HostView {
    pub host_id: i64,
    pub name: String,
    pub ip: Option<Ipv4Addr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub owner_name: Option<Option<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub owner_email: Option<Option<String>>,
}

impl HostView {
    pub fn new(h: Host, vis: Visibility) -> Self {
        Self {
            host_id: h.host_id.0,
            name: h.name,
            ip: h.ip,
            owner_name: vis.owner_contact.then_some(h.owner_name),
            owner_email: vis.owner_contact.then_some(h.owner_email),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TypeView {
    pub type_id: i64,
    pub name: String,
    pub description: String,
}

impl From<IncidentType> for TypeView {
    fn from(t: IncidentType) -> Self {
        Self {
            type_id: t.type_id.0,
            name: t.name,
            description: t.description,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IncidentView {
    pub incident_id: i64,
    pub date: DateTime<Utc>,
    pub host: HostView,
    #[serde(rename = "type")]
    pub incident_type: TypeView,
    pub email_id: i64,
    pub comments: String,
}

impl IncidentView {
    pub fn new(row: IncidentRow, vis: Visibility) -> Self {
        Self {
            incident_id: row.incident_id.0,
            date: row.date,
            host: HostView::new(row.host, vis),
            incident_type: row.incident_type.into(),
            email_id: row.email_id.0,
            comments: row.comments,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IncidentPage {
    pub total: usize,
    pub offset: usize,
    pub incidents: Vec<IncidentView>,
}

#[derive(Debug, Serialize)]
pub struct EmailView {
    pub email_id: i64,
    pub date: NaiveDate,
    pub comments: String,
    pub verdict: SenderVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl EmailView {
    pub fn new(e: EmailRecord, vis: Visibility) -> Self {
        Self {
            email_id: e.email_id.0,
            date: e.date,
            comments: e.comments,
            verdict: e.verdict,
            source: vis.email_source.then_some(e.source),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IncidentDetail {
    #[serde(flatten)]
    pub incident: IncidentView,
    pub email: Option<EmailView>,
}

//! Durable storage for hosts, incident types, alert emails, incidents, users
//! and the audit trail.
//!
//! The backend is an embedded SQLite database. Every constraint of the
//! logical schema is checked here before a statement reaches the backend, so
//! callers get a typed [`StoreError`] rather than a driver message, and the
//! backend's own CHECK/FOREIGN KEY clauses act as a second line.
//!
//! Every mutation runs in a transaction together with exactly one audit
//! entry. The audit table has no update or delete path in this API, and the
//! database rejects both through triggers.

mod schema;
mod types;

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use parking_lot::Mutex;
use rusqlite::{params, Connection, OpenFlags, OptionalExtension, Row};
use thiserror::Error;

pub use schema::{dump as schema_dump, CREATE_SCHEMA, SCHEMA_VERSION};
pub use types::*;

use crate::auth::Role;
use crate::clock::truncate_to_second;
use crate::digest::sha256_hex;

const READER_POOL_SIZE: usize = 4;
const TS_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("referential integrity: {0}")]
    ReferentialIntegrity(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("storage backend: {0}")]
    Backend(#[from] rusqlite::Error),
    #[error("storage directory: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

pub(crate) fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.format(TS_FORMAT).to_string()
}

pub(crate) fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .map(|n| n.and_utc())
        .map_err(|_| StoreError::Corrupt(format!("bad timestamp {s:?}")))
}

fn format_date(d: &NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| StoreError::Corrupt(format!("bad date {s:?}")))
}

fn parse_ip(s: Option<String>) -> Result<Option<Ipv4Addr>> {
    s.map(|s| s.parse().map_err(|_| StoreError::Corrupt(format!("bad ip {s:?}"))))
        .transpose()
}

/// Checks the host-name rules: at most 30 characters and at least three dots.
pub fn validate_host_name(name: &str) -> Result<()> {
    if name.chars().count() > HOST_NAME_MAX {
        return Err(StoreError::ConstraintViolation(format!(
            "invalid_host_name: {name:?} exceeds {HOST_NAME_MAX} characters"
        )));
    }
    if name.matches('.').count() < 3 {
        return Err(StoreError::ConstraintViolation(format!(
            "invalid_host_name: {name:?} must contain at least three '.'"
        )));
    }
    Ok(())
}

fn check_len(field: &str, value: &str, max: usize) -> Result<()> {
    if value.chars().count() > max {
        return Err(StoreError::ConstraintViolation(format!("{field} exceeds {max} characters")));
    }
    Ok(())
}

/// A user row as stored. The digest never leaves the crate through serde.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub username: String,
    pub password_digest: String,
    pub role: Role,
}

pub struct Store {
    writer: Mutex<Connection>,
    readers: Vec<Mutex<Connection>>,
    next_reader: AtomicUsize,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("path", &self.path)
            .field("readers", &self.readers.len())
            .finish()
    }
}

fn configure(conn: &Connection) -> Result<()> {
    conn.busy_timeout(std::time::Duration::from_secs(10))?;
    conn.pragma_update(None, "foreign_keys", true)?;
    Ok(())
}

impl Store {
    /// Opens (creating if needed) the database file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let writer = Connection::open(&path)?;
        configure(&writer)?;
        writer.pragma_update(None, "journal_mode", "WAL")?;
        writer.pragma_update(None, "synchronous", "NORMAL")?;
        writer.execute_batch(CREATE_SCHEMA)?;

        let mut readers = Vec::with_capacity(READER_POOL_SIZE);
        for _ in 0..READER_POOL_SIZE {
            let conn = Connection::open_with_flags(
                &path,
                OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
            )?;
            configure(&conn)?;
            conn.pragma_update(None, "query_only", true)?;
            readers.push(Mutex::new(conn));
        }
        Ok(Self {
            writer: Mutex::new(writer),
            readers,
            next_reader: AtomicUsize::new(0),
            path: Some(path),
        })
    }

    /// A private in-memory database. All reads share the writer connection.
    pub fn open_in_memory() -> Result<Self> {
        let writer = Connection::open_in_memory()?;
        configure(&writer)?;
        writer.execute_batch(CREATE_SCHEMA)?;
        Ok(Self {
            writer: Mutex::new(writer),
            readers: Vec::new(),
            next_reader: AtomicUsize::new(0),
            path: None,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Runs `f` on a read connection.
    pub(crate) fn read<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        if self.readers.is_empty() {
            return f(&self.writer.lock());
        }
        let start = self.next_reader.fetch_add(1, Ordering::Relaxed);
        let n = self.readers.len();
        for i in 0..n {
            if let Some(conn) = self.readers[(start + i) % n].try_lock() {
                return f(&conn);
            }
        }
        f(&self.readers[start % n].lock())
    }

    /// Runs `f` on a connection that refuses writes at the engine level.
    pub(crate) fn read_only<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        if !self.readers.is_empty() {
            return self.read(f);
        }
        let conn = self.writer.lock();
        conn.pragma_update(None, "query_only", true)?;
        let out = f(&conn);
        conn.pragma_update(None, "query_only", false)?;
        out
    }

    /// Runs `f` inside one write transaction. Audit entries produced by the
    /// transaction's mutations commit or roll back together with them.
    pub fn transaction<T>(&self, actor: &str, f: impl FnOnce(&mut StoreTx<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.writer.lock();
        let tx = conn.transaction()?;
        let mut stx = StoreTx { tx, actor };
        let out = f(&mut stx)?;
        stx.tx.commit()?;
        Ok(out)
    }

    pub fn upsert_host(&self, actor: &str, name: &str, ip: Option<Ipv4Addr>, owner: Option<&Owner>) -> Result<Host> {
        self.transaction(actor, |tx| tx.upsert_host(name, ip, owner).map(|(h, _)| h))
    }

    pub fn upsert_type(&self, actor: &str, name: &str, description: Option<&str>) -> Result<IncidentType> {
        self.transaction(actor, |tx| tx.upsert_type(name, description).map(|(t, _)| t))
    }

    pub fn insert_email(&self, actor: &str, email: NewEmail) -> Result<EmailRecord> {
        self.transaction(actor, |tx| tx.insert_email(email))
    }

    pub fn insert_incident(&self, actor: &str, incident: NewIncident) -> Result<Incident> {
        self.transaction(actor, |tx| tx.insert_incident(incident))
    }

    /// Records an incident typed in by an engineer. A synthetic email record
    /// is created so the incident still joins in every report.
    pub fn insert_manual_incident(
        &self,
        actor: &str,
        date: DateTime<Utc>,
        host: HostId,
        incident_type: TypeId,
        comments: &str,
    ) -> Result<Incident> {
        self.transaction(actor, |tx| {
            let email = tx.insert_manual_email(date.date_naive(), &format!("manual entry by {}", tx.actor))?;
            tx.insert_incident(NewIncident {
                date,
                host,
                incident_type,
                email: email.email_id,
                comments: comments.to_string(),
            })
        })
    }

    pub fn update_incident_comments(&self, actor: &str, id: IncidentId, comments: &str) -> Result<Incident> {
        self.transaction(actor, |tx| tx.update_incident_comments(id, comments))
    }

    pub fn create_user(&self, actor: &str, username: &str, password_digest: &str, role: Role) -> Result<()> {
        self.transaction(actor, |tx| tx.create_user(username, password_digest, role))
    }

    /// Appends one entry to the audit trail.
    pub fn record_audit(&self, entry: &AuditEntry) -> Result<()> {
        let conn = self.writer.lock();
        insert_audit(&conn, entry)
    }

    pub fn get_host(&self, id: HostId) -> Result<Option<Host>> {
        self.read(|c| {
            c.query_row(
                "SELECT hostid, name, ip, owner_name, owner_email FROM hosts WHERE hostid = ?1",
                [id.0],
                raw_host,
            )
            .optional()?
            .map(RawHost::into_host)
            .transpose()
        })
    }

    pub fn host_by_name(&self, name: &str) -> Result<Option<Host>> {
        self.read(|c| host_by_name(c, name))
    }

    pub fn get_type(&self, id: TypeId) -> Result<Option<IncidentType>> {
        self.read(|c| {
            c.query_row(
                "SELECT typeid, name, description FROM types WHERE typeid = ?1",
                [id.0],
                row_type,
            )
            .optional()
            .map_err(Into::into)
        })
    }

    pub fn type_by_name(&self, name: &str) -> Result<Option<IncidentType>> {
        self.read(|c| type_by_name(c, name))
    }

    pub fn get_email(&self, id: EmailId) -> Result<Option<EmailRecord>> {
        self.read(|c| {
            c.query_row(
                "SELECT emailid, date, source, comments, digest, verdict FROM emails WHERE emailid = ?1",
                [id.0],
                raw_email,
            )
            .optional()?
            .map(RawEmail::into_email)
            .transpose()
        })
    }

    pub fn get_incident(&self, id: IncidentId) -> Result<Option<Incident>> {
        self.read(|c| incident_by_id(c, id))
    }

    /// Joined incident rows matching every supplied filter, oldest first.
    pub fn get_incidents(&self, filter: &IncidentFilter) -> Result<Vec<IncidentRow>> {
        self.read(|c| {
            let mut sql = String::from(
                "SELECT i.incidentid, i.date, h.hostid, h.name, h.ip, h.owner_name, h.owner_email,
                        t.typeid, t.name, t.description, i.email, i.comments
                 FROM incidents i
                 JOIN hosts h ON i.host = h.hostid
                 JOIN types t ON i.type = t.typeid
                 JOIN emails e ON i.email = e.emailid
                 WHERE 1 = 1",
            );
            let mut args: Vec<Box<dyn rusqlite::ToSql>> = Vec::new();
            if let Some(h) = &filter.host_name {
                args.push(Box::new(h.clone()));
                sql.push_str(&format!(" AND h.name = ?{}", args.len()));
            }
            if let Some(t) = &filter.type_name {
                args.push(Box::new(t.clone()));
                sql.push_str(&format!(" AND t.name = ?{}", args.len()));
            }
            if let Some(from) = &filter.from {
                args.push(Box::new(format_ts(from)));
                sql.push_str(&format!(" AND i.date >= ?{}", args.len()));
            }
            if let Some(to) = &filter.to {
                args.push(Box::new(format_ts(to)));
                sql.push_str(&format!(" AND i.date < ?{}", args.len()));
            }
            sql.push_str(" ORDER BY i.date ASC, i.incidentid ASC");
            let limit = filter.limit.map(|l| l as i64).unwrap_or(-1);
            sql.push_str(&format!(" LIMIT {limit} OFFSET {}", filter.offset));

            let mut stmt = c.prepare(&sql)?;
            let rows = stmt.query_map(rusqlite::params_from_iter(args.iter()), |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    RawHost {
                        host_id: r.get(2)?,
                        name: r.get(3)?,
                        ip: r.get(4)?,
                        owner_name: r.get(5)?,
                        owner_email: r.get(6)?,
                    },
                    IncidentType {
                        type_id: TypeId(r.get(7)?),
                        name: r.get(8)?,
                        description: r.get::<_, Option<String>>(9)?.unwrap_or_default(),
                    },
                    r.get::<_, i64>(10)?,
                    r.get::<_, Option<String>>(11)?.unwrap_or_default(),
                ))
            })?;
            let mut out = Vec::new();
            for row in rows {
                let (id, date, host, incident_type, email, comments) = row?;
                out.push(IncidentRow {
                    incident_id: IncidentId(id),
                    date: parse_ts(&date)?,
                    host: host.into_host()?,
                    incident_type,
                    email_id: EmailId(email),
                    comments,
                });
            }
            Ok(out)
        })
    }

    pub fn email_by_digest(&self, digest: &str) -> Result<Option<EmailRecord>> {
        self.read(|c| email_by_digest(c, digest))
    }

    pub fn incident_by_email(&self, email: EmailId) -> Result<Option<Incident>> {
        self.read(|c| incident_by_email(c, email))
    }

    pub fn find_user(&self, username: &str) -> Result<Option<UserRecord>> {
        self.read(|c| {
            c.query_row(
                "SELECT username, password_digest, role FROM users WHERE username = ?1",
                [username],
                |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?)),
            )
            .optional()?
            .map(user_from_raw)
            .transpose()
        })
    }

    pub fn list_users(&self) -> Result<Vec<UserRecord>> {
        self.read(|c| {
            let mut stmt = c.prepare("SELECT username, password_digest, role FROM users ORDER BY username")?;
            let rows = stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?;
            rows.map(|r| user_from_raw(r?)).collect()
        })
    }

    /// Audit entries in append order, starting at `offset`.
    pub fn audit_entries(&self, offset: usize, limit: Option<usize>) -> Result<Vec<AuditEntry>> {
        self.read(|c| {
            let limit = limit.map(|l| l as i64).unwrap_or(-1);
            let mut stmt = c.prepare(
                "SELECT timestamp, actor, action, entity, detail FROM audit ORDER BY seq LIMIT ?1 OFFSET ?2",
            )?;
            let rows = stmt.query_map(params![limit, offset as i64], raw_audit)?;
            rows.map(|r| r?.into_entry()).collect()
        })
    }

    /// The last `n` audit entries, oldest first.
    pub fn audit_tail(&self, n: usize) -> Result<Vec<AuditEntry>> {
        let total = self.counts()?.audit as usize;
        self.audit_entries(total.saturating_sub(n), Some(n))
    }

    pub fn counts(&self) -> Result<StoreCounts> {
        self.read(|c| {
            let count = |table: &str| -> Result<u64> {
                let n: i64 = c.query_row(&format!("SELECT count(*) FROM {table}"), [], |r| r.get(0))?;
                Ok(n as u64)
            };
            Ok(StoreCounts {
                hosts: count("hosts")?,
                types: count("types")?,
                emails: count("emails")?,
                incidents: count("incidents")?,
                audit: count("audit")?,
            })
        })
    }

    pub fn all_hosts(&self) -> Result<Vec<Host>> {
        self.read(|c| {
            let mut stmt = c.prepare("SELECT hostid, name, ip, owner_name, owner_email FROM hosts ORDER BY hostid")?;
            let rows = stmt.query_map([], raw_host)?;
            rows.map(|r| r?.into_host()).collect()
        })
    }

    pub fn all_types(&self) -> Result<Vec<IncidentType>> {
        self.read(|c| {
            let mut stmt = c.prepare("SELECT typeid, name, description FROM types ORDER BY typeid")?;
            let rows = stmt.query_map([], row_type)?;
            rows.map(|r| r.map_err(Into::into)).collect()
        })
    }

    pub fn all_emails(&self) -> Result<Vec<EmailRecord>> {
        self.read(|c| {
            let mut stmt =
                c.prepare("SELECT emailid, date, source, comments, digest, verdict FROM emails ORDER BY emailid")?;
            let rows = stmt.query_map([], raw_email)?;
            rows.map(|r| r?.into_email()).collect()
        })
    }

    pub fn all_incidents(&self) -> Result<Vec<Incident>> {
        self.read(|c| {
            let mut stmt =
                c.prepare("SELECT incidentid, date, host, type, email, comments FROM incidents ORDER BY incidentid")?;
            let rows = stmt.query_map([], raw_incident)?;
            rows.map(|r| r?.into_incident()).collect()
        })
    }
}

/// A write transaction bound to the acting user.
pub struct StoreTx<'a> {
    tx: rusqlite::Transaction<'a>,
    actor: &'a str,
}

impl StoreTx<'_> {
    pub fn actor(&self) -> &str {
        self.actor
    }

    fn audit(&self, action: AuditAction, entity: String, detail: String) -> Result<()> {
        insert_audit(&self.tx, &AuditEntry::now(self.actor, action, entity, detail))
    }

    /// Returns the host and whether it was created by this call.
    pub fn upsert_host(&mut self, name: &str, ip: Option<Ipv4Addr>, owner: Option<&Owner>) -> Result<(Host, bool)> {
        validate_host_name(name)?;
        let owner_name = owner.and_then(|o| o.name.as_deref());
        let owner_email = owner.and_then(|o| o.email.as_deref());
        if let Some(v) = owner_name {
            check_len("owner_name", v, OWNER_FIELD_MAX)?;
        }
        if let Some(v) = owner_email {
            check_len("owner_email", v, OWNER_FIELD_MAX)?;
        }

        if let Some(mut host) = host_by_name(&self.tx, name)? {
            let mut changed = Vec::new();
            if host.ip.is_none() && ip.is_some() {
                host.ip = ip;
                changed.push(format!("ip: null -> {}", ip.unwrap()));
            }
            if host.owner_name.is_none() && owner_name.is_some() {
                host.owner_name = owner_name.map(str::to_string);
                changed.push("owner_name filled".to_string());
            }
            if host.owner_email.is_none() && owner_email.is_some() {
                host.owner_email = owner_email.map(str::to_string);
                changed.push("owner_email filled".to_string());
            }
            if !changed.is_empty() {
                self.tx.execute(
                    "UPDATE hosts SET ip = ?1, owner_name = ?2, owner_email = ?3 WHERE hostid = ?4",
                    params![host.ip.map(|i| i.to_string()), host.owner_name, host.owner_email, host.host_id.0],
                )?;
                self.audit(AuditAction::Update, format!("host:{}", host.host_id), changed.join("; "))?;
            }
            return Ok((host, false));
        }

        self.tx.execute(
            "INSERT INTO hosts (name, ip, owner_name, owner_email) VALUES (?1, ?2, ?3, ?4)",
            params![name, ip.map(|i| i.to_string()), owner_name, owner_email],
        )?;
        let host = Host {
            host_id: HostId(self.tx.last_insert_rowid()),
            name: name.to_string(),
            ip,
            owner_name: owner_name.map(str::to_string),
            owner_email: owner_email.map(str::to_string),
        };
        self.audit(
            AuditAction::Insert,
            format!("host:{}", host.host_id),
            format!("name={} ip={}", host.name, ip.map(|i| i.to_string()).unwrap_or_default()),
        )?;
        Ok((host, true))
    }

    /// Returns the type and whether it was created by this call.
    pub fn upsert_type(&mut self, name: &str, description: Option<&str>) -> Result<(IncidentType, bool)> {
        if name.trim().is_empty() {
            return Err(StoreError::ConstraintViolation("type name must be non-empty".into()));
        }
        check_len("type name", name, TYPE_NAME_MAX)?;
        if let Some(d) = description {
            check_len("type description", d, TYPE_DESCRIPTION_MAX)?;
        }
        if let Some(mut existing) = type_by_name(&self.tx, name)? {
            if let Some(d) = description.filter(|d| !d.is_empty() && existing.description.is_empty()) {
                self.tx.execute(
                    "UPDATE types SET description = ?1 WHERE typeid = ?2",
                    params![d, existing.type_id.0],
                )?;
                existing.description = d.to_string();
                self.audit(
                    AuditAction::Update,
                    format!("type:{}", existing.type_id),
                    "description filled".into(),
                )?;
            }
            return Ok((existing, false));
        }
        let description = description.unwrap_or("");
        self.tx.execute(
            "INSERT INTO types (name, description) VALUES (?1, ?2)",
            params![name, description],
        )?;
        let t = IncidentType {
            type_id: TypeId(self.tx.last_insert_rowid()),
            name: name.to_string(),
            description: description.to_string(),
        };
        self.audit(AuditAction::Insert, format!("type:{}", t.type_id), format!("name={name}"))?;
        Ok((t, true))
    }

    /// Inserts an email record. Fails with a constraint violation when a
    /// message with the same digest is already stored.
    pub fn insert_email(&mut self, email: NewEmail) -> Result<EmailRecord> {
        let digest = sha256_hex(email.source.as_bytes());
        self.insert_email_with_digest(email, digest)
    }

    /// Creates the placeholder email attached to hand-entered incidents.
    pub fn insert_manual_email(&mut self, date: NaiveDate, comments: &str) -> Result<EmailRecord> {
        let nonce: [u8; 16] = rand::random();
        let digest = format!("manual-{}", hex::encode(nonce));
        self.insert_email_with_digest(
            NewEmail {
                date,
                source: String::new(),
                comments: comments.to_string(),
                verdict: SenderVerdict::Manual,
            },
            digest,
        )
    }

    fn insert_email_with_digest(&mut self, email: NewEmail, digest: String) -> Result<EmailRecord> {
        if email_by_digest(&self.tx, &digest)?.is_some() {
            return Err(StoreError::ConstraintViolation(format!("duplicate email digest {digest}")));
        }
        self.tx.execute(
            "INSERT INTO emails (date, source, comments, digest, verdict) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                format_date(&email.date),
                email.source,
                email.comments,
                digest,
                email.verdict.as_str()
            ],
        )?;
        let rec = EmailRecord {
            email_id: EmailId(self.tx.last_insert_rowid()),
            date: email.date,
            source: email.source,
            comments: email.comments,
            digest,
            verdict: email.verdict,
        };
        self.audit(
            AuditAction::Insert,
            format!("email:{}", rec.email_id),
            format!("date={} verdict={} bytes={}", rec.date, rec.verdict.as_str(), rec.source.len()),
        )?;
        Ok(rec)
    }

    pub fn insert_incident(&mut self, incident: NewIncident) -> Result<Incident> {
        let exists = |table: &str, col: &str, id: i64| -> Result<bool> {
            Ok(self
                .tx
                .query_row(&format!("SELECT 1 FROM {table} WHERE {col} = ?1"), [id], |_| Ok(()))
                .optional()?
                .is_some())
        };
        if !exists("hosts", "hostid", incident.host.0)? {
            return Err(StoreError::ReferentialIntegrity(format!("host {} does not exist", incident.host)));
        }
        if !exists("types", "typeid", incident.incident_type.0)? {
            return Err(StoreError::ReferentialIntegrity(format!(
                "type {} does not exist",
                incident.incident_type
            )));
        }
        if !exists("emails", "emailid", incident.email.0)? {
            return Err(StoreError::ReferentialIntegrity(format!("email {} does not exist", incident.email)));
        }
        let date = truncate_to_second(incident.date);
        self.tx.execute(
            "INSERT INTO incidents (date, host, type, email, comments) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                format_ts(&date),
                incident.host.0,
                incident.incident_type.0,
                incident.email.0,
                incident.comments
            ],
        )?;
        let rec = Incident {
            incident_id: IncidentId(self.tx.last_insert_rowid()),
            date,
            host: incident.host,
            incident_type: incident.incident_type,
            email: incident.email,
            comments: incident.comments,
        };
        self.audit(
            AuditAction::Insert,
            format!("incident:{}", rec.incident_id),
            format!(
                "date={} host={} type={} email={}",
                format_ts(&rec.date),
                rec.host,
                rec.incident_type,
                rec.email
            ),
        )?;
        Ok(rec)
    }

    pub fn update_incident_comments(&mut self, id: IncidentId, comments: &str) -> Result<Incident> {
        let mut incident = incident_by_id(&self.tx, id)?.ok_or_else(|| StoreError::NotFound(format!("incident {id}")))?;
        self.tx.execute(
            "UPDATE incidents SET comments = ?1 WHERE incidentid = ?2",
            params![comments, id.0],
        )?;
        let before = std::mem::replace(&mut incident.comments, comments.to_string());
        self.audit(
            AuditAction::Update,
            format!("incident:{id}"),
            format!("comments: {} -> {} chars", before.chars().count(), comments.chars().count()),
        )?;
        Ok(incident)
    }

    pub fn create_user(&mut self, username: &str, password_digest: &str, role: Role) -> Result<()> {
        if username.is_empty() || username.chars().any(|c| c.is_whitespace() || c.is_control()) {
            return Err(StoreError::ConstraintViolation(format!("invalid username {username:?}")));
        }
        let taken = self
            .tx
            .query_row("SELECT 1 FROM users WHERE username = ?1", [username], |_| Ok(()))
            .optional()?
            .is_some();
        if taken {
            return Err(StoreError::ConstraintViolation(format!("user {username:?} already exists")));
        }
        self.tx.execute(
            "INSERT INTO users (username, password_digest, role) VALUES (?1, ?2, ?3)",
            params![username, password_digest, role.as_str()],
        )?;
        self.audit(AuditAction::Insert, format!("user:{username}"), format!("role={}", role.as_str()))
    }

    pub fn host_by_name(&self, name: &str) -> Result<Option<Host>> {
        host_by_name(&self.tx, name)
    }

    pub fn email_by_digest(&self, digest: &str) -> Result<Option<EmailRecord>> {
        email_by_digest(&self.tx, digest)
    }

    pub fn incident_by_email(&self, email: EmailId) -> Result<Option<Incident>> {
        incident_by_email(&self.tx, email)
    }

    pub fn get_incident(&self, id: IncidentId) -> Result<Option<Incident>> {
        incident_by_id(&self.tx, id)
    }
}

fn insert_audit(conn: &Connection, e: &AuditEntry) -> Result<()> {
    conn.execute(
        "INSERT INTO audit (timestamp, actor, action, entity, detail) VALUES (?1, ?2, ?3, ?4, ?5)",
        params![format_ts(&e.timestamp), e.actor, e.action.as_str(), e.entity, e.detail],
    )?;
    Ok(())
}

struct RawHost {
    host_id: i64,
    name: String,
    ip: Option<String>,
    owner_name: Option<String>,
    owner_email: Option<String>,
}

impl RawHost {
    fn into_host(self) -> Result<Host> {
        Ok(Host {
            host_id: HostId(self.host_id),
            name: self.name,
            ip: parse_ip(self.ip)?,
            owner_name: self.owner_name,
            owner_email: self.owner_email,
        })
    }
}

fn raw_host(r: &Row<'_>) -> rusqlite::Result<RawHost> {
    Ok(RawHost {
        host_id: r.get(0)?,
        name: r.get(1)?,
        ip: r.get(2)?,
        owner_name: r.get(3)?,
        owner_email: r.get(4)?,
    })
}

fn row_type(r: &Row<'_>) -> rusqlite::Result<IncidentType> {
    Ok(IncidentType {
        type_id: TypeId(r.get(0)?),
        name: r.get(1)?,
        description: r.get::<_, Option<String>>(2)?.unwrap_or_default(),
    })
}

struct RawEmail {
    id: i64,
    date: String,
    source: Option<String>,
    comments: Option<String>,
    digest: String,
    verdict: String,
}

impl RawEmail {
    fn into_email(self) -> Result<EmailRecord> {
        Ok(EmailRecord {
            email_id: EmailId(self.id),
            date: parse_date(&self.date)?,
            source: self.source.unwrap_or_default(),
            comments: self.comments.unwrap_or_default(),
            digest: self.digest,
            verdict: SenderVerdict::parse(&self.verdict)
                .ok_or_else(|| StoreError::Corrupt(format!("bad verdict {:?}", self.verdict)))?,
        })
    }
}

fn raw_email(r: &Row<'_>) -> rusqlite::Result<RawEmail> {
    Ok(RawEmail {
        id: r.get(0)?,
        date: r.get(1)?,
        source: r.get(2)?,
        comments: r.get(3)?,
        digest: r.get(4)?,
        verdict: r.get(5)?,
    })
}

struct RawIncident {
    id: i64,
    date: String,
    host: i64,
    incident_type: i64,
    email: i64,
    comments: Option<String>,
}

impl RawIncident {
    fn into_incident(self) -> Result<Incident> {
        Ok(Incident {
            incident_id: IncidentId(self.id),
            date: parse_ts(&self.date)?,
            host: HostId(self.host),
            incident_type: TypeId(self.incident_type),
            email: EmailId(self.email),
            comments: self.comments.unwrap_or_default(),
        })
    }
}

fn raw_incident(r: &Row<'_>) -> rusqlite::Result<RawIncident> {
    Ok(RawIncident {
        id: r.get(0)?,
        date: r.get(1)?,
        host: r.get(2)?,
        incident_type: r.get(3)?,
        email: r.get(4)?,
        comments: r.get(5)?,
    })
}

struct RawAudit {
    ts: String,
    actor: String,
    action: String,
    entity: String,
    detail: String,
}

impl RawAudit {
    fn into_entry(self) -> Result<AuditEntry> {
        Ok(AuditEntry {
            timestamp: parse_ts(&self.ts)?,
            actor: self.actor,
            action: AuditAction::parse(&self.action)
                .ok_or_else(|| StoreError::Corrupt(format!("bad audit action {:?}", self.action)))?,
            entity: self.entity,
            detail: self.detail,
        })
    }
}

fn raw_audit(r: &Row<'_>) -> rusqlite::Result<RawAudit> {
    Ok(RawAudit {
        ts: r.get(0)?,
        actor: r.get(1)?,
        action: r.get(2)?,
        entity: r.get(3)?,
        detail: r.get(4)?,
    })
}

fn host_by_name(c: &Connection, name: &str) -> Result<Option<Host>> {
    c.query_row(
        "SELECT hostid, name, ip, owner_name, owner_email FROM hosts WHERE name = ?1",
        [name],
        raw_host,
    )
    .optional()?
    .map(RawHost::into_host)
    .transpose()
}

fn type_by_name(c: &Connection, name: &str) -> Result<Option<IncidentType>> {
    c.query_row("SELECT typeid, name, description FROM types WHERE name = ?1", [name], row_type)
        .optional()
        .map_err(Into::into)
}

fn email_by_digest(c: &Connection, digest: &str) -> Result<Option<EmailRecord>> {
    c.query_row(
        "SELECT emailid, date, source, comments, digest, verdict FROM emails WHERE digest = ?1",
        [digest],
        raw_email,
    )
    .optional()?
    .map(RawEmail::into_email)
    .transpose()
}

fn incident_by_id(c: &Connection, id: IncidentId) -> Result<Option<Incident>> {
    c.query_row(
        "SELECT incidentid, date, host, type, email, comments FROM incidents WHERE incidentid = ?1",
        [id.0],
        raw_incident,
    )
    .optional()?
    .map(RawIncident::into_incident)
    .transpose()
}

fn incident_by_email(c: &Connection, email: EmailId) -> Result<Option<Incident>> {
    c.query_row(
        "SELECT incidentid, date, host, type, email, comments FROM incidents WHERE email = ?1
         ORDER BY incidentid LIMIT 1",
        [email.0],
        raw_incident,
    )
    .optional()?
    .map(RawIncident::into_incident)
    .transpose()
}

fn user_from_raw((username, password_digest, role): (String, String, String)) -> Result<UserRecord> {
    let role = Role::parse(&role).ok_or_else(|| StoreError::Corrupt(format!("bad role {role:?}")))?;
    Ok(UserRecord {
        username,
        password_digest,
        role,
    })
}

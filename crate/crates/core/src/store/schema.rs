//! Logical schema of the incident database.
//!
//! Column names follow the classic hosts/emails/types/incidents layout so
//! free-form queries written against that layout run unchanged. Timestamps
//! are stored as `YYYY-MM-DD HH:MM:SS` text in UTC.

pub const SCHEMA_VERSION: i64 = 1;

pub const CREATE_SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS hosts (
    hostid      INTEGER PRIMARY KEY AUTOINCREMENT,
    name        VARCHAR(30) UNIQUE NOT NULL
                CONSTRAINT invalid_host_name
                CHECK (name LIKE '%.%.%.%' AND length(name) <= 30),
    ip          INET,
    owner_name  VARCHAR(35) CHECK (owner_name IS NULL OR length(owner_name) <= 35),
    owner_email VARCHAR(35) CHECK (owner_email IS NULL OR length(owner_email) <= 35)
);

CREATE TABLE IF NOT EXISTS emails (
    emailid  INTEGER PRIMARY KEY AUTOINCREMENT,
    date     DATE NOT NULL,
    source   TEXT,
    comments TEXT,
    digest   TEXT UNIQUE NOT NULL,
    verdict  TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS types (
    typeid      INTEGER PRIMARY KEY AUTOINCREMENT,
    name        VARCHAR(25) UNIQUE NOT NULL CHECK (length(name) BETWEEN 1 AND 25),
    description VARCHAR(256) CHECK (description IS NULL OR length(description) <= 256)
);

CREATE TABLE IF NOT EXISTS incidents (
    incidentid INTEGER PRIMARY KEY AUTOINCREMENT,
    date       TIMESTAMP NOT NULL,
    host       INTEGER NOT NULL REFERENCES hosts (hostid),
    type       INTEGER NOT NULL REFERENCES types (typeid),
    email      INTEGER NOT NULL REFERENCES emails (emailid),
    comments   TEXT
);

CREATE INDEX IF NOT EXISTS idx_incidents_date ON incidents (date);
CREATE INDEX IF NOT EXISTS idx_incidents_host ON incidents (host);
CREATE INDEX IF NOT EXISTS idx_incidents_type ON incidents (type);
CREATE INDEX IF NOT EXISTS idx_incidents_email ON incidents (email);

CREATE TABLE IF NOT EXISTS audit (
    seq       INTEGER PRIMARY KEY AUTOINCREMENT,
    timestamp TIMESTAMP NOT NULL,
    actor     TEXT NOT NULL,
    action    TEXT NOT NULL
              CHECK (action IN ('insert', 'update', 'delete', 'login', 'search')),
    entity    TEXT NOT NULL,
    detail    TEXT NOT NULL
);

CREATE TRIGGER IF NOT EXISTS audit_no_update BEFORE UPDATE ON audit
BEGIN
    SELECT RAISE(ABORT, 'audit log is append-only');
END;

CREATE TRIGGER IF NOT EXISTS audit_no_delete BEFORE DELETE ON audit
BEGIN
    SELECT RAISE(ABORT, 'audit log is append-only');
END;

CREATE TABLE IF NOT EXISTS users (
    username        TEXT PRIMARY KEY,
    password_digest TEXT NOT NULL,
    role            TEXT NOT NULL CHECK (role IN ('admin', 'normal'))
);
"#;

/// Human-readable schema document emitted by `schema dump`.
pub fn dump() -> String {
    let mut out = String::new();
    out.push_str(&format!("-- uclog schema version {SCHEMA_VERSION}\n"));
    for line in CREATE_SCHEMA.trim().lines() {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

//! Alert message wire format.
//!
//! ```text
//! Date: Mon, 1 Mar 2004 02:05:00 +0000
//! From: bro@sensor.example.edu
//! Subject: scan detected
//!
//! HOST: a.b.c.d
//! TYPE: scan
//! TIME: 2004-03-01T02:05:00Z
//! DETAIL: 120 ports in 10s
//! ```
//!
//! The header block is optional; it is recognised only when every line
//! before the first blank line is a `Name: value` header (or a folded
//! continuation), none of them is an alert key, and a body follows. Body
//! keys are case-insensitive and stored upper-cased; the first occurrence
//! of a key wins. Timestamps without a zone are UTC.

use chrono::{DateTime, NaiveDateTime, Utc};
use indexmap::IndexMap;
use serde::Serialize;

use crate::clock::truncate_to_second;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlertMessage {
    /// Header names as written, in order of appearance.
    pub headers: IndexMap<String, String>,
    /// Upper-cased `KEY: value` pairs from the body.
    pub body_fields: IndexMap<String, String>,
    /// The message exactly as received.
    pub raw: String,
    /// Event time from `TIME`, falling back to the `Date` header.
    pub time: DateTime<Utc>,
}

impl AlertMessage {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.body_fields.get(key).map(String::as_str)
    }

    pub fn host(&self) -> &str {
        self.field("HOST").unwrap_or_default()
    }

    pub fn alert_type(&self) -> &str {
        self.field("TYPE").unwrap_or_default()
    }
}

fn split_field(line: &str) -> Option<(&str, &str)> {
    let (name, value) = line.split_once(':')?;
    let name = name.trim();
    let mut chars = name.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return None;
    }
    Some((name, value.trim()))
}

fn lines(raw: &str) -> impl Iterator<Item = &str> {
    raw.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l))
}

/// Parses an ISO-8601 instant. Naive forms are taken as UTC.
pub fn parse_iso_time(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(truncate_to_second(t.with_timezone(&Utc)));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(truncate_to_second(n.and_utc()));
        }
    }
    None
}

pub fn parse_alert_email(raw: &str) -> Result<AlertMessage, String> {
    if raw.trim().is_empty() {
        return Err("empty message".into());
    }

    let all: Vec<&str> = lines(raw).collect();
    let blank = all.iter().position(|l| l.trim().is_empty());
    let mut headers: IndexMap<String, String> = IndexMap::new();
    let body_start = match blank {
        Some(b) if b > 0 && is_header_block(&all[..b]) && all[b..].iter().any(|l| !l.trim().is_empty()) => {
            let mut last: Option<String> = None;
            for line in &all[..b] {
                if line.starts_with([' ', '\t']) {
                    if let Some(v) = last.as_ref().and_then(|k| headers.get_mut(k)) {
                        v.push(' ');
                        v.push_str(line.trim());
                    }
                } else if let Some((k, v)) = split_field(line) {
                    headers.entry(k.to_string()).or_insert_with(|| v.to_string());
                    last = Some(k.to_string());
                }
            }
            b + 1
        }
        _ => 0,
    };

    let mut body_fields: IndexMap<String, String> = IndexMap::new();
    for line in &all[body_start..] {
        if let Some((k, v)) = split_field(line) {
            body_fields.entry(k.to_ascii_uppercase()).or_insert_with(|| v.to_string());
        }
    }

    for key in ["HOST", "TYPE"] {
        if body_fields.get(key).is_none_or(|v| v.is_empty()) {
            return Err(format!("missing {key}"));
        }
    }

    let time = match body_fields.get("TIME") {
        Some(t) => parse_iso_time(t).ok_or_else(|| format!("invalid TIME {t:?}"))?,
        None => {
            let date = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("Date"))
                .map(|(_, v)| v.as_str())
                .ok_or("no parseable timestamp: TIME and Date both absent")?;
            DateTime::parse_from_rfc2822(date)
                .map(|t| truncate_to_second(t.with_timezone(&Utc)))
                .ok()
                .or_else(|| parse_iso_time(date))
                .ok_or_else(|| format!("no parseable timestamp: bad Date header {date:?}"))?
        }
    };

    Ok(AlertMessage {
        headers,
        body_fields,
        raw: raw.to_string(),
        time,
    })
}

fn is_header_block(block: &[&str]) -> bool {
    !block[0].starts_with([' ', '\t'])
        && block.iter().all(|l| {
            l.starts_with([' ', '\t'])
                || split_field(l).is_some_and(|(k, _)| !["HOST", "TYPE", "TIME"].iter().any(|r| k.eq_ignore_ascii_case(r)))
        })
}

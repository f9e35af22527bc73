use std::net::Ipv4Addr;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use serde::Serialize;

use super::CorrelatorError;
use crate::digest::sha256_hex;

pub const DEFAULT_MAX_RECORDS: usize = 100_000;

/// Source identifiers are restricted so they can appear verbatim in cache
/// keys and command lines.
pub fn valid_source_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SearchRequest {
    pub source_id: String,
    pub ip: Ipv4Addr,
    pub port: Option<u16>,
    /// Inclusive.
    pub start: DateTime<Utc>,
    /// Exclusive.
    pub end: DateTime<Utc>,
    pub max_records: usize,
}

fn rejected(what: &str, value: &str) -> CorrelatorError {
    CorrelatorError::InjectionRejected(format!("{what} {value:?} is not a literal"))
}

/// Dotted quad with no leading zeros, whitespace or anything else.
pub fn parse_ip_literal(s: &str) -> Result<Ipv4Addr, CorrelatorError> {
    let ip: Ipv4Addr = s.parse().map_err(|_| rejected("address", s))?;
    if ip.to_string() != s {
        return Err(rejected("address", s));
    }
    Ok(ip)
}

pub fn parse_port_literal(s: &str) -> Result<u16, CorrelatorError> {
    if s.is_empty() || s.len() > 5 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(rejected("port", s));
    }
    s.parse().map_err(|_| rejected("port", s))
}

/// Epoch seconds, or `YYYY-MM-DDTHH:MM:SSZ`.
pub fn parse_time_literal(s: &str) -> Result<DateTime<Utc>, CorrelatorError> {
    if !s.is_empty() && s.len() <= 12 && s.bytes().all(|b| b.is_ascii_digit()) {
        let secs: i64 = s.parse().map_err(|_| rejected("time", s))?;
        return Utc.timestamp_opt(secs, 0).single().ok_or_else(|| rejected("time", s));
    }
    let shape_ok = s.len() == 20
        && s.bytes().enumerate().all(|(i, b)| match i {
            4 | 7 => b == b'-',
            10 => b == b'T',
            13 | 16 => b == b':',
            19 => b == b'Z',
            _ => b.is_ascii_digit(),
        });
    if !shape_ok {
        return Err(rejected("time", s));
    }
    NaiveDateTime::parse_from_str(&s[..19], "%Y-%m-%dT%H:%M:%S")
        .map(|n| n.and_utc())
        .map_err(|_| rejected("time", s))
}

impl SearchRequest {
    pub fn new(
        source_id: &str,
        ip: Ipv4Addr,
        port: Option<u16>,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<Self, CorrelatorError> {
        if !valid_source_id(source_id) {
            return Err(rejected("source", source_id));
        }
        if start >= end {
            return Err(CorrelatorError::InvalidWindow(format!("start {start} is not before end {end}")));
        }
        if start.timestamp_subsec_nanos() != 0 || end.timestamp_subsec_nanos() != 0 {
            return Err(CorrelatorError::InvalidWindow("window bounds must be whole seconds".into()));
        }
        Ok(Self {
            source_id: source_id.to_string(),
            ip,
            port,
            start,
            end,
            max_records: DEFAULT_MAX_RECORDS,
        })
    }

    /// Builds a request from untrusted text, accepting only strict literals.
    pub fn from_strings(
        source_id: &str,
        ip: &str,
        port: Option<&str>,
        start: &str,
        end: &str,
    ) -> Result<Self, CorrelatorError> {
        let ip = parse_ip_literal(ip)?;
        let port = port.map(parse_port_literal).transpose()?;
        let start = parse_time_literal(start)?;
        let end = parse_time_literal(end)?;
        Self::new(source_id, ip, port, start, end)
    }

    pub fn with_max_records(mut self, max: usize) -> Self {
        self.max_records = max;
        self
    }

    /// Unique text form of the request; equal requests give equal keys.
    pub fn canonical_key(&self) -> String {
        format!(
            "source={};ip={};port={};start={};end={};max={}",
            self.source_id,
            self.ip,
            self.port.map_or_else(|| "*".to_string(), |p| p.to_string()),
            self.start.timestamp(),
            self.end.timestamp(),
            self.max_records
        )
    }

    pub fn cache_digest(&self) -> String {
        sha256_hex(self.canonical_key().as_bytes())
    }

    pub fn matches(&self, r: &super::FlowRecord) -> bool {
        r.start >= self.start && r.start < self.end && r.involves(self.ip) && self.port.is_none_or(|p| r.uses_port(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hour,
    Day,
    Week,
}

impl WindowKind {
    /// Half-width of the window centred on an incident.
    pub fn span(self) -> Duration {
        match self {
            WindowKind::Hour => Duration::minutes(30),
            WindowKind::Day => Duration::hours(12),
            WindowKind::Week => Duration::seconds(302_400),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hour" => Some(WindowKind::Hour),
            "day" => Some(WindowKind::Day),
            "week" => Some(WindowKind::Week),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_literals() {
        assert!(parse_ip_literal("1.2.3.4").is_ok());
        for bad in ["1.2.3.4; rm -rf /", " 1.2.3.4", "01.2.3.4", "1.2.3", "1.2.3.4\n", "$(id)", "1.2.3.256"] {
            assert!(matches!(parse_ip_literal(bad), Err(CorrelatorError::InjectionRejected(_))), "{bad:?}");
        }
        assert_eq!(parse_time_literal("1078099200").unwrap().timestamp(), 1078099200);
        assert_eq!(parse_time_literal("2004-03-01T00:00:00Z").unwrap().timestamp(), 1078099200);
        for bad in ["", "-1", "2004-03-01", "2004-03-01T00:00:00+01:00", "1078099200 ", "2004-13-01T00:00:00Z", "`date`"] {
            assert!(parse_time_literal(bad).is_err(), "{bad:?}");
        }
        assert_eq!(parse_port_literal("22").unwrap(), 22);
        for bad in ["", "65536", "+22", "22 ", "0x16"] {
            assert!(parse_port_literal(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn windows_must_be_ordered() {
        let r = SearchRequest::from_strings("nf", "1.2.3.4", None, "100", "100");
        assert!(matches!(r, Err(CorrelatorError::InvalidWindow(_))));
        assert!(SearchRequest::from_strings("n f", "1.2.3.4", None, "100", "200").is_err());
    }

    #[test]
    fn canonical_key_shape() {
        let r = SearchRequest::from_strings("nf", "1.2.3.4", Some("22"), "100", "200").unwrap();
        assert_eq!(r.canonical_key(), "source=nf;ip=1.2.3.4;port=22;start=100;end=200;max=100000");
        let any = SearchRequest::from_strings("nf", "1.2.3.4", None, "100", "200").unwrap().with_max_records(5);
        assert_eq!(any.canonical_key(), "source=nf;ip=1.2.3.4;port=*;start=100;end=200;max=5");
        assert_ne!(r.cache_digest(), any.cache_digest());
    }

    #[test]
    fn window_spans() {
        assert_eq!(WindowKind::Hour.span(), Duration::minutes(30));
        assert_eq!(WindowKind::Day.span(), Duration::hours(12));
        assert_eq!(WindowKind::Week.span() * 2, Duration::days(7));
    }
}

//! Flow record text format.
//!
//! One record per line, ten whitespace-separated fields:
//!
//! ```text
//! start_epoch duration proto src_ip src_port dst_ip dst_port packets bytes flags
//! 1078106700  2.5      tcp   10.0.0.1 4242   141.142.2.8 22   10      1200  S
//! ```
//!
//! Lines starting with `#` and blank lines carry no record.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::Serialize;
use thiserror::Error;

pub const FLAGS_MAX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Other(u8),
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Tcp => f.write_str("tcp"),
            Protocol::Udp => f.write_str("udp"),
            Protocol::Icmp => f.write_str("icmp"),
            Protocol::Other(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tcp" => Ok(Protocol::Tcp),
            "udp" => Ok(Protocol::Udp),
            "icmp" => Ok(Protocol::Icmp),
            _ if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) => {
                s.parse().map(Protocol::Other).map_err(|_| format!("protocol number {s} out of range"))
            }
            _ => Err(format!("unknown protocol {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRecord {
    pub start: DateTime<Utc>,
    pub duration: f64,
    pub protocol: Protocol,
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub packets: u64,
    pub bytes: u64,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field {field}: {reason}")]
pub struct FlowParseError {
    pub field: usize,
    pub reason: String,
}

impl FlowRecord {
    pub fn involves(&self, ip: Ipv4Addr) -> bool {
        self.src_ip == ip || self.dst_ip == ip
    }

    pub fn uses_port(&self, port: u16) -> bool {
        self.src_port == port || self.dst_port == port
    }
}

impl fmt::Display for FlowRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {} {} {}",
            self.start.timestamp(),
            self.duration,
            self.protocol,
            self.src_ip,
            self.src_port,
            self.dst_ip,
            self.dst_port,
            self.packets,
            self.bytes,
            self.flags
        )
    }
}

/// True for lines that carry no record.
pub fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn field<T: FromStr>(fields: &[&str], i: usize, what: &str) -> Result<T, FlowParseError> {
    let raw = fields.get(i).ok_or_else(|| FlowParseError {
        field: i,
        reason: format!("missing {what}"),
    })?;
    raw.parse().map_err(|_| FlowParseError {
        field: i,
        reason: format!("bad {what} {raw:?}"),
    })
}

pub fn parse_flow_line(line: &str) -> Result<FlowRecord, FlowParseError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let epoch: i64 = field(&fields, 0, "start")?;
    let start = Utc.timestamp_opt(epoch, 0).single().ok_or_else(|| FlowParseError {
        field: 0,
        reason: format!("start {epoch} out of range"),
    })?;
    let duration: f64 = field(&fields, 1, "duration")?;
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(FlowParseError {
            field: 1,
            reason: format!("duration {duration} must be finite and non-negative"),
        });
    }
    let protocol = fields
        .get(2)
        .ok_or_else(|| FlowParseError {
            field: 2,
            reason: "missing protocol".into(),
        })?
        .parse()
        .map_err(|reason| FlowParseError { field: 2, reason })?;
    let record = FlowRecord {
        start,
        duration,
        protocol,
        src_ip: field(&fields, 3, "source address")?,
        src_port: field(&fields, 4, "source port")?,
        dst_ip: field(&fields, 5, "destination address")?,
        dst_port: field(&fields, 6, "destination port")?,
        packets: field(&fields, 7, "packet count")?,
        bytes: field(&fields, 8, "byte count")?,
        flags: field(&fields, 9, "flags")?,
    };
    if record.flags.len() > FLAGS_MAX {
        return Err(FlowParseError {
            field: 9,
            reason: format!("flags longer than {FLAGS_MAX} characters"),
        });
    }
    if fields.len() > 10 {
        return Err(FlowParseError {
            field: 10,
            reason: "trailing fields".into(),
        });
    }
    Ok(record)
}

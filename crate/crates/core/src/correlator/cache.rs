//! Durable, content-addressed result cache.
//!
//! Each entry is `<digest>.flows`, holding records in the flow text format,
//! and `<digest>.meta`, holding `name=value` lines. The digest is the
//! SHA-256 of the request's canonical key. Both files are written to a
//! temporary name and renamed, the `.meta` last, so a visible `.meta`
//! always has its records next to it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::Rng;
use tracing::warn;

use super::{parse_flow_line, SearchRequest, SearchResult};

#[derive(Debug, Clone)]
pub struct FlowCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Meta {
    key: String,
    fetched_at: DateTime<Utc>,
    truncated: bool,
    parse_errors: usize,
    ttl: u64,
}

impl Meta {
    fn render(&self) -> String {
        format!(
            "key={}\nfetched_at={}\ntruncated={}\nparse_errors={}\nttl={}\n",
            self.key,
            self.fetched_at.timestamp(),
            self.truncated,
            self.parse_errors,
            self.ttl
        )
    }

    fn parse(text: &str) -> Option<Self> {
        let get = |name: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
        };
        Some(Self {
            key: get("key")?.to_string(),
            fetched_at: DateTime::from_timestamp(get("fetched_at")?.parse().ok()?, 0)?,
            truncated: get("truncated")?.parse().ok()?,
            parse_errors: get("parse_errors")?.parse().ok()?,
            ttl: get("ttl")?.parse().ok()?,
        })
    }

    fn expired(&self, now: DateTime<Utc>) -> bool {
        self.ttl > 0 && (now - self.fetched_at).num_seconds() >= self.ttl as i64
    }
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp{:016x}", rand::thread_rng().gen::<u64>()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

impl FlowCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, digest: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{digest}.flows")), self.dir.join(format!("{digest}.meta")))
    }

    /// A stored, unexpired result for exactly this request.
    pub fn lookup(&self, req: &SearchRequest, now: DateTime<Utc>) -> Option<SearchResult> {
        let (flows, meta) = self.paths(&req.cache_digest());
        let meta = Meta::parse(&fs::read_to_string(meta).ok()?)?;
        if meta.key != req.canonical_key() || meta.expired(now) {
            return None;
        }
        let text = fs::read_to_string(&flows).ok()?;
        let mut records = Vec::new();
        for line in text.lines() {
            match parse_flow_line(line) {
                Ok(r) => records.push(r),
                Err(e) => {
                    warn!(file = %flows.display(), error = %e, "corrupt cache entry");
                    return None;
                }
            }
        }
        Some(SearchResult {
            request: req.clone(),
            records,
            truncated: meta.truncated,
            fetched_at: meta.fetched_at,
            from_cache: true,
            parse_errors: meta.parse_errors,
        })
    }

    pub fn store(&self, result: &SearchResult, ttl: u64) -> io::Result<()> {
        let (flows, meta) = self.paths(&result.request.cache_digest());
        let mut body = String::new();
        for r in &result.records {
            body.push_str(&r.to_string());
            body.push('\n');
        }
        write_atomic(&flows, &body)?;
        let m = Meta {
            key: result.request.canonical_key(),
            fetched_at: result.fetched_at,
            truncated: result.truncated,
            parse_errors: result.parse_errors,
            ttl,
        };
        write_atomic(&meta, &m.render())
    }

    /// Removes entries whose nonzero ttl has run out. Returns how many.
    pub fn evict_expired(&self, now: DateTime<Utc>) -> io::Result<usize> {
        let mut removed = 0;
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("meta") {
                continue;
            }
            let Some(meta) = fs::read_to_string(&path).ok().and_then(|t| Meta::parse(&t)) else {
                continue;
            };
            if meta.expired(now) {
                fs::remove_file(&path)?;
                let _ = fs::remove_file(path.with_extension("flows"));
                removed += 1;
            }
        }
        Ok(removed)
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|d| {
                d.filter_map(Result::ok)
                    .filter(|e| e.path().extension().and_then(|x| x.to_str()) == Some("meta"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

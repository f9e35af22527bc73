//! Drop-directory sweeping.
//!
//! Given `<dir>`, messages are read from `<dir>/incoming` when that
//! directory exists and from `<dir>` itself otherwise. Ingested files move
//! to `<dir>/processed`; failures move to `<dir>/rejected` next to a
//! `<name>.reason` sidecar. Only one sweeper may own a directory at a time,
//! enforced through a `.uclog-ingest.lock` file created exclusively.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tracing::{debug, warn};

use super::{IngestError, Ingestor};

const LOCK_FILE: &str = ".uclog-ingest.lock";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropLayout {
    pub incoming: PathBuf,
    pub processed: PathBuf,
    pub rejected: PathBuf,
    pub lock: PathBuf,
}

impl DropLayout {
    pub fn for_dir(dir: &Path) -> Self {
        let nested = dir.join("incoming");
        let incoming = if nested.is_dir() { nested } else { dir.to_path_buf() };
        Self {
            incoming,
            processed: dir.join("processed"),
            rejected: dir.join("rejected"),
            lock: dir.join(LOCK_FILE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    /// Accepted messages that had already been ingested.
    pub duplicates: usize,
    pub new_hosts: usize,
    pub new_types: usize,
    pub rejections: Vec<Rejection>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected
    }

    pub fn incidents_added(&self) -> usize {
        self.accepted - self.duplicates
    }

    pub fn summary_line(&self) -> String {
        format!(
            "accepted={} rejected={} duplicates={} new_hosts={} new_types={}",
            self.accepted, self.rejected, self.duplicates, self.new_hosts, self.new_types
        )
    }
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(path: &Path) -> Result<Self, IngestError> {
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path.to_path_buf()))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(IngestError::Busy(path.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.0) {
            warn!(lock = %self.0.display(), error = %e, "could not remove ingest lock");
        }
    }
}

fn unique_destination(dir: &Path, name: &str) -> PathBuf {
    let first = dir.join(name);
    if !first.exists() {
        return first;
    }
    (1..)
        .map(|i| dir.join(format!("{name}.{i}")))
        .find(|p| !p.exists())
        .expect("unbounded suffix search")
}

impl Ingestor {
    /// Ingests every regular file in the drop directory once.
    pub fn scan_drop_directory(&self, dir: &Path) -> Result<IngestReport, IngestError> {
        if !dir.is_dir() {
            return Err(IngestError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} is not a directory", dir.display()),
            )));
        }
        let layout = DropLayout::for_dir(dir);
        let _lock = LockGuard::acquire(&layout.lock)?;

        let mut files: Vec<(String, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&layout.incoming)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || !entry.file_type()?.is_file() {
                continue;
            }
            files.push((name, entry.path()));
        }
        files.sort();

        let mut report = IngestReport::default();
        if files.is_empty() {
            return Ok(report);
        }
        fs::create_dir_all(&layout.processed)?;
        fs::create_dir_all(&layout.rejected)?;

        for (name, path) in files {
            let result = fs::read(&path)
                .map_err(IngestError::from)
                .and_then(|bytes| String::from_utf8(bytes).map_err(|_| IngestError::Parse("not valid UTF-8".into())))
                .and_then(|raw| self.ingest_raw(&raw));
            match result {
                Ok(outcome) => {
                    report.accepted += 1;
                    report.duplicates += usize::from(outcome.deduplicated);
                    report.new_hosts += usize::from(outcome.new_host);
                    report.new_types += usize::from(outcome.new_type);
                    fs::rename(&path, unique_destination(&layout.processed, &name))?;
                    debug!(file = %name, incident = %outcome.incident.incident_id, dedup = outcome.deduplicated, "ingested");
                }
                Err(e @ (IngestError::Io(_) | IngestError::Busy(_))) => return Err(e),
                Err(e) => {
                    let reason = e.to_string();
                    let dest = unique_destination(&layout.rejected, &name);
                    fs::rename(&path, &dest)?;
                    let sidecar = dest.with_file_name(format!(
                        "{}.reason",
                        dest.file_name().unwrap_or_default().to_string_lossy()
                    ));
                    fs::write(sidecar, format!("{reason}\n"))?;
                    debug!(file = %name, %reason, "rejected");
                    report.rejected += 1;
                    report.rejections.push(Rejection { file: name, reason });
                }
            }
        }
        Ok(report)
    }
}

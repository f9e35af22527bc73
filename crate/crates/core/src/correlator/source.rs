use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{valid_source_id, CorrelatorError, SearchRequest};

pub const PLACEHOLDERS: [&str; 4] = ["{path}", "{ip}", "{start}", "{end}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSource {
    pub source_id: String,
    pub display_name: String,
    pub transport: TransportKind,
    /// `user@host` for remote sources.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Log file path; `{date}` expands to `YYYY-MM-DD`.
    pub path_pattern: String,
    pub command_template: String,
    /// Seconds a cached result stays valid; 0 keeps it forever.
    #[serde(default)]
    pub cache_ttl: u64,
}

impl LogSource {
    pub fn validate(&self) -> Result<(), CorrelatorError> {
        if !valid_source_id(&self.source_id) {
            return Err(CorrelatorError::Template(format!("invalid source id {:?}", self.source_id)));
        }
        if let Some(missing) = PLACEHOLDERS.iter().find(|p| !self.command_template.contains(*p)) {
            return Err(CorrelatorError::Template(format!(
                "command template of {} lacks {missing}",
                self.source_id
            )));
        }
        if self.path_pattern.trim().is_empty() {
            return Err(CorrelatorError::Template(format!("{} has an empty path pattern", self.source_id)));
        }
        if self.transport == TransportKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(CorrelatorError::Template(format!("remote source {} has no endpoint", self.source_id)));
        }
        Ok(())
    }

    /// Log files covering the request window, one per UTC day when the
    /// pattern is dated.
    pub fn paths_for(&self, req: &SearchRequest) -> Vec<String> {
        if !self.path_pattern.contains("{date}") {
            return vec![self.path_pattern.clone()];
        }
        let first: NaiveDate = req.start.date_naive();
        let last: NaiveDate = (req.end - Duration::seconds(1)).date_naive();
        first
            .iter_days()
            .take_while(|d| *d <= last)
            .map(|d| self.path_pattern.replace("{date}", &d.format("%Y-%m-%d").to_string()))
            .collect()
    }
}

/// Single-quotes a word for a POSIX shell.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Fills the source's command template. Each substituted value is quoted
/// separately; the address and window are already typed literals.
pub fn build_search_command(source: &LogSource, req: &SearchRequest) -> Result<String, CorrelatorError> {
    source.validate()?;
    if req.source_id != source.source_id {
        return Err(CorrelatorError::UnknownSource(req.source_id.clone()));
    }
    let paths: Vec<String> = source.paths_for(req).iter().map(|p| shell_quote(p)).collect();
    Ok(source
        .command_template
        .replace("{path}", &paths.join(" "))
        .replace("{ip}", &shell_quote(&req.ip.to_string()))
        .replace("{start}", &shell_quote(&req.start.timestamp().to_string()))
        .replace("{end}", &shell_quote(&req.end.timestamp().to_string())))
}

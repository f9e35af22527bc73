//! Canned reports, distribution statistics and the restricted free-form
//! query path, with tabular, chart-series and TSV output.
//!
//! Every report takes its "now" from the caller so identical stores and
//! clocks give byte-identical exports.

mod custom;
mod reports;
mod table;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

pub use custom::{check_read_only, run_custom_query};
pub use reports::*;
pub use table::{
    export_tsv, format_timestamp, render_plotspec, render_value, ChartKind, ChartSeries, Column, ColumnKind,
    ReportTable, StatsSummary, Value, PIE_TOLERANCE,
};

use crate::ingest::parse_iso_time;
use crate::store::{IncidentFilter, Store, StoreError};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("unknown report {0:?}")]
    UnknownReport(String),
    #[error("missing parameter {0:?}")]
    MissingParam(&'static str),
    #[error("bad parameter {name:?}: {reason}")]
    BadParam { name: String, reason: String },
    #[error("unknown incident type {0:?}")]
    UnknownType(String),
    #[error("unknown host {0:?}")]
    UnknownHost(String),
    #[error("host {0:?} has no incidents")]
    NoIncidents(String),
    #[error("custom queries require the admin role")]
    Forbidden,
    #[error("query rejected: {0}")]
    QueryRejected(String),
    #[error("query error: {0}")]
    QueryFailed(String),
    #[error("internal report error: {0}")]
    Internal(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type ReportParams = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub required: bool,
    pub help: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportSpec {
    pub name: &'static str,
    pub title: &'static str,
    pub params: &'static [ParamSpec],
}

const LIMIT: ParamSpec = ParamSpec {
    name: "limit",
    required: false,
    help: "maximum rows (default 10)",
};

pub const CATALOG: &[ReportSpec] = &[
    ReportSpec {
        name: "incident_list",
        title: "Incidents with host and type",
        params: &[
            ParamSpec { name: "host", required: false, help: "host name" },
            ParamSpec { name: "type", required: false, help: "incident type name" },
            ParamSpec { name: "from", required: false, help: "inclusive ISO-8601 start" },
            ParamSpec { name: "to", required: false, help: "exclusive ISO-8601 end" },
            ParamSpec { name: "limit", required: false, help: "maximum rows" },
            ParamSpec { name: "offset", required: false, help: "rows to skip" },
        ],
    },
    ReportSpec {
        name: "pct_by_dow",
        title: "Percentage of incidents per day of week",
        params: &[],
    },
    ReportSpec {
        name: "dist_by_hour",
        title: "Incidents per hour of day",
        params: &[ParamSpec { name: "type", required: false, help: "restrict to one incident type" }],
    },
    ReportSpec {
        name: "host_history",
        title: "Incident history of one host",
        params: &[ParamSpec { name: "host", required: true, help: "host name" }],
    },
    ReportSpec {
        name: "top_compromised",
        title: "Hosts appearing in the most incidents",
        params: &[LIMIT],
    },
    ReportSpec {
        name: "policy_violators",
        title: "Hosts with the most incidents of one type",
        params: &[ParamSpec { name: "type", required: true, help: "incident type name, e.g. INCBAND" }, LIMIT],
    },
    ReportSpec {
        name: "monthly_trend",
        title: "Incidents per month over the trailing year",
        params: &[],
    },
    ReportSpec {
        name: "first_offenders",
        title: "Hosts whose first incident is within the trailing month",
        params: &[LIMIT],
    },
    ReportSpec {
        name: "frequent_types",
        title: "Incident counts per type",
        params: &[],
    },
    ReportSpec {
        name: "attack_stats",
        title: "Daily incident counts for one host with mean and deviation",
        params: &[ParamSpec { name: "host", required: true, help: "host name" }],
    },
];

pub fn find_report(name: &str) -> Option<&'static ReportSpec> {
    CATALOG.iter().find(|r| r.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportOutput {
    pub name: String,
    pub table: ReportTable,
    pub chart: Option<ChartSeries>,
    pub summary: Option<StatsSummary>,
}

struct Params<'a> {
    spec: &'static ReportSpec,
    raw: &'a ReportParams,
}

impl Params<'_> {
    fn str(&self, name: &'static str) -> Result<Option<&str>, QueryError> {
        let spec = self
            .spec
            .params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| QueryError::Internal(format!("{name} is not a parameter of {}", self.spec.name)))?;
        match self.raw.get(name) {
            Some(v) => Ok(Some(v.as_str())),
            None if spec.required => Err(QueryError::MissingParam(spec.name)),
            None => Ok(None),
        }
    }

    fn required(&self, name: &'static str) -> Result<&str, QueryError> {
        self.str(name)?.ok_or(QueryError::MissingParam(name))
    }

    fn usize(&self, name: &'static str) -> Result<Option<usize>, QueryError> {
        self.str(name)?
            .map(|v| {
                v.parse().map_err(|_| QueryError::BadParam {
                    name: name.into(),
                    reason: format!("{v:?} is not a non-negative integer"),
                })
            })
            .transpose()
    }

    fn limit(&self) -> Result<usize, QueryError> {
        Ok(self.usize("limit")?.unwrap_or(DEFAULT_LIMIT))
    }

    fn time(&self, name: &'static str) -> Result<Option<DateTime<Utc>>, QueryError> {
        self.str(name)?
            .map(|v| {
                parse_iso_time(v).ok_or_else(|| QueryError::BadParam {
                    name: name.into(),
                    reason: format!("{v:?} is not an ISO-8601 time"),
                })
            })
            .transpose()
    }
}

/// Runs a catalog report by name.
pub fn run_report(
    store: &Store,
    name: &str,
    params: &ReportParams,
    now: DateTime<Utc>,
) -> Result<ReportOutput, QueryError> {
    let spec = find_report(name).ok_or_else(|| QueryError::UnknownReport(name.to_string()))?;
    if let Some(unknown) = params.keys().find(|k| !spec.params.iter().any(|p| p.name == k.as_str())) {
        return Err(QueryError::BadParam {
            name: unknown.clone(),
            reason: format!("not accepted by report {name}"),
        });
    }
    let p = Params { spec, raw: params };
    let (table, chart, summary) = match spec.name {
        "incident_list" => {
            let filter = IncidentFilter {
                host_name: p.str("host")?.map(str::to_string),
                type_name: p.str("type")?.map(str::to_string),
                from: p.time("from")?,
                to: p.time("to")?,
                limit: p.usize("limit")?,
                offset: p.usize("offset")?.unwrap_or(0),
            };
            (report_incident_list(store, &filter)?, None, None)
        }
        "pct_by_dow" => {
            let (t, c) = report_pct_by_dow(store)?;
            (t, Some(c), None)
        }
        "dist_by_hour" => {
            let (t, c) = report_dist_by_hour(store, p.str("type")?)?;
            (t, Some(c), None)
        }
        "host_history" => (report_host_history(store, p.required("host")?)?, None, None),
        "top_compromised" => {
            let (t, c) = report_top_compromised(store, p.limit()?)?;
            (t, Some(c), None)
        }
        "policy_violators" => (report_policy_violators(store, p.required("type")?, p.limit()?)?, None, None),
        "monthly_trend" => {
            let (t, c) = report_monthly_trend(store, now)?;
            (t, Some(c), None)
        }
        "first_offenders" => (report_first_offenders(store, now, p.limit()?)?, None, None),
        "frequent_types" => {
            let (t, c) = report_frequent_types(store)?;
            (t, Some(c), None)
        }
        "attack_stats" => {
            let s = attack_stats_for_host(store, p.required("host")?)?;
            (s.daily, Some(s.histogram), Some(s.summary))
        }
        other => return Err(QueryError::Internal(format!("catalog entry {other} has no runner"))),
    };
    Ok(ReportOutput {
        name: spec.name.to_string(),
        table,
        chart,
        summary,
    })
}

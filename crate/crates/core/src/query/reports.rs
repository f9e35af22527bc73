use chrono::{DateTime, Duration, NaiveDate, Utc};
use rusqlite::params;

use super::{ChartKind, ChartSeries, Column, ColumnKind, QueryError, ReportTable, StatsSummary, Value};
use crate::store::{format_ts, parse_ts, IncidentFilter, Store};

pub const DEFAULT_LIMIT: usize = 10;

pub const DAY_NAMES: [&str; 7] = ["Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"];

pub const MONTH_NAMES: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

/// Trailing window of the monthly trend.
pub const TREND_WINDOW_DAYS: i64 = 365;

/// Trailing window in which a host's first incident must fall.
pub const FIRST_OFFENDER_WINDOW_DAYS: i64 = 30;

fn check_limit(limit: usize) -> Result<(), QueryError> {
    if limit == 0 {
        return Err(QueryError::BadParam {
            name: "limit".into(),
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

fn require_type(store: &Store, name: &str) -> Result<(), QueryError> {
    match store.type_by_name(name)? {
        Some(_) => Ok(()),
        None => Err(QueryError::UnknownType(name.to_string())),
    }
}

fn ts(s: &str) -> Result<Value, QueryError> {
    Ok(Value::Timestamp(parse_ts(s)?))
}

fn percent(count: i64, total: i64) -> f64 {
    100.0 * count as f64 / total as f64
}

/// Incident date, host name and type description for every matching incident.
pub fn report_incident_list(store: &Store, filter: &IncidentFilter) -> Result<ReportTable, QueryError> {
    let mut table = ReportTable::new(vec![
        Column::new("date", ColumnKind::Timestamp),
        Column::new("name", ColumnKind::Text),
        Column::new("description", ColumnKind::Text),
    ]);
    for row in store.get_incidents(filter)? {
        table.push(vec![
            row.date.into(),
            row.host.name.into(),
            row.incident_type.description.into(),
        ])?;
    }
    Ok(table)
}

/// Share of all incidents falling on each weekday, Sunday first.
pub fn report_pct_by_dow(store: &Store) -> Result<(ReportTable, ChartSeries), QueryError> {
    let counts: Vec<(i64, i64)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT CAST(strftime('%w', date) AS INTEGER) AS dow, count(*)
             FROM incidents GROUP BY dow ORDER BY dow",
        )?;
        let rows = stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let total: i64 = counts.iter().map(|(_, n)| n).sum();

    let mut table = ReportTable::new(vec![
        Column::new("day", ColumnKind::Text),
        Column::new("cnt", ColumnKind::Real),
        Column::new("dow", ColumnKind::Integer),
    ]);
    let (mut labels, mut values) = (Vec::new(), Vec::new());
    for (dow, n) in counts {
        let name = DAY_NAMES[dow as usize];
        let pct = percent(n, total);
        table.push(vec![name.into(), pct.into(), dow.into()])?;
        labels.push(name.to_string());
        values.push(pct);
    }
    let chart = ChartSeries::new("Incidents by day of week (%)", ChartKind::Bar, labels, values)?;
    Ok((table, chart))
}

/// Incident counts for each hour of the day, all 24 hours present.
pub fn report_dist_by_hour(store: &Store, type_filter: Option<&str>) -> Result<(ReportTable, ChartSeries), QueryError> {
    if let Some(t) = type_filter {
        require_type(store, t)?;
    }
    let counts: Vec<(i64, i64)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT CAST(strftime('%H', i.date) AS INTEGER) AS hour, count(*)
             FROM incidents i JOIN types t ON i.type = t.typeid
             WHERE ?1 IS NULL OR t.name = ?1
             GROUP BY hour",
        )?;
        let rows = stmt.query_map(params![type_filter], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let mut by_hour = [0i64; 24];
    for (h, n) in counts {
        by_hour[h as usize] = n;
    }

    let mut table = ReportTable::new(vec![
        Column::new("hour", ColumnKind::Integer),
        Column::new("cnt", ColumnKind::Integer),
    ]);
    for (h, n) in by_hour.iter().enumerate() {
        table.push(vec![(h as i64).into(), (*n).into()])?;
    }
    let title = match type_filter {
        Some(t) => format!("{t} incidents by hour of day"),
        None => "Incidents by hour of day".to_string(),
    };
    let chart = ChartSeries::new(
        &title,
        ChartKind::Bar,
        (0..24).map(|h| format!("{h:02}")).collect(),
        by_hour.iter().map(|&n| n as f64).collect(),
    )?;
    Ok((table, chart))
}

/// Every incident recorded against one host, oldest first.
pub fn report_host_history(store: &Store, host_name: &str) -> Result<ReportTable, QueryError> {
    let filter = IncidentFilter {
        host_name: Some(host_name.to_string()),
        ..Default::default()
    };
    let mut table = ReportTable::new(vec![
        Column::new("incidentid", ColumnKind::Integer),
        Column::new("date", ColumnKind::Timestamp),
        Column::new("name", ColumnKind::Text),
        Column::new("ip", ColumnKind::Text),
        Column::new("type", ColumnKind::Text),
        Column::new("description", ColumnKind::Text),
        Column::new("emailid", ColumnKind::Integer),
        Column::new("comments", ColumnKind::Text),
    ]);
    for row in store.get_incidents(&filter)? {
        table.push(vec![
            row.incident_id.0.into(),
            row.date.into(),
            row.host.name.into(),
            row.host.ip.map(|ip| ip.to_string()).into(),
            row.incident_type.name.into(),
            row.incident_type.description.into(),
            row.email_id.0.into(),
            row.comments.into(),
        ])?;
    }
    Ok(table)
}

fn host_count_table(rows: Vec<(String, Option<String>, i64)>) -> Result<ReportTable, QueryError> {
    let mut table = ReportTable::new(vec![
        Column::new("name", ColumnKind::Text),
        Column::new("ip", ColumnKind::Text),
        Column::new("cnt", ColumnKind::Integer),
    ]);
    for (name, ip, n) in rows {
        table.push(vec![name.into(), ip.into(), n.into()])?;
    }
    Ok(table)
}

/// Hosts ranked by number of incidents, ties by name.
pub fn report_top_compromised(store: &Store, limit: usize) -> Result<(ReportTable, ChartSeries), QueryError> {
    check_limit(limit)?;
    let rows: Vec<(String, Option<String>, i64)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT h.name, h.ip, count(i.incidentid) AS cnt
             FROM hosts h JOIN incidents i ON h.hostid = i.host
             GROUP BY h.hostid
             ORDER BY cnt DESC, h.name ASC
             LIMIT ?1",
        )?;
        let rows = stmt.query_map(params![limit as i64], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let chart = ChartSeries::new(
        "Incidents per host",
        ChartKind::Bar,
        rows.iter().map(|r| r.0.clone()).collect(),
        rows.iter().map(|r| r.2 as f64).collect(),
    )?;
    Ok((host_count_table(rows)?, chart))
}

/// Hosts ranked by number of incidents of one type.
pub fn report_policy_violators(store: &Store, type_name: &str, limit: usize) -> Result<ReportTable, QueryError> {
    check_limit(limit)?;
    require_type(store, type_name)?;
    let rows = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT h.name, h.ip, count(i.incidentid) AS cnt
             FROM hosts h
             JOIN incidents i ON h.hostid = i.host
             JOIN types t ON i.type = t.typeid
             WHERE t.name = ?1
             GROUP BY h.hostid
             ORDER BY cnt DESC, h.name ASC
             LIMIT ?2",
        )?;
        let rows = stmt.query_map(params![type_name, limit as i64], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    host_count_table(rows)
}

/// Position of a month in a trailing year that ends with the current month.
pub fn trend_position(month: u32, current_month: u32) -> u32 {
    (month + 12 - current_month - 1) % 12
}

/// Incidents per calendar month over the trailing year.
pub fn report_monthly_trend(store: &Store, now: DateTime<Utc>) -> Result<(ReportTable, ChartSeries), QueryError> {
    let lo = format_ts(&(now - Duration::days(TREND_WINDOW_DAYS)));
    let hi = format_ts(&now);
    let counts: Vec<(u32, i64)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT CAST(strftime('%m', date) AS INTEGER) AS mon, count(incidentid)
             FROM incidents
             WHERE date > ?1 AND date <= ?2
             GROUP BY mon",
        )?;
        let rows = stmt.query_map(params![lo, hi], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let current = chrono::Datelike::month(&now);
    let mut rows: Vec<(u32, u32, i64)> = counts
        .into_iter()
        .map(|(mon, n)| (trend_position(mon, current), mon, n))
        .collect();
    rows.sort_unstable();

    let mut table = ReportTable::new(vec![
        Column::new("pos", ColumnKind::Integer),
        Column::new("mon", ColumnKind::Integer),
        Column::new("cnt", ColumnKind::Integer),
    ]);
    let (mut labels, mut values) = (Vec::new(), Vec::new());
    for (pos, mon, n) in rows {
        table.push(vec![i64::from(pos).into(), i64::from(mon).into(), n.into()])?;
        labels.push(MONTH_NAMES[mon as usize - 1].to_string());
        values.push(n as f64);
    }
    let chart = ChartSeries::new("Incidents per month", ChartKind::Line, labels, values)?;
    Ok((table, chart))
}

/// Hosts whose earliest incident lies in the trailing month, newest first.
pub fn report_first_offenders(store: &Store, now: DateTime<Utc>, limit: usize) -> Result<ReportTable, QueryError> {
    check_limit(limit)?;
    let lo = format_ts(&(now - Duration::days(FIRST_OFFENDER_WINDOW_DAYS)));
    let hi = format_ts(&now);
    let rows: Vec<(String, Option<String>, String)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT h.name, h.ip, min(i.date) AS first_seen
             FROM hosts h JOIN incidents i ON h.hostid = i.host
             GROUP BY h.hostid
             HAVING first_seen > ?1 AND first_seen <= ?2
             ORDER BY first_seen DESC, h.name ASC
             LIMIT ?3",
        )?;
        let rows = stmt.query_map(params![lo, hi, limit as i64], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let mut table = ReportTable::new(vec![
        Column::new("name", ColumnKind::Text),
        Column::new("ip", ColumnKind::Text),
        Column::new("first_seen", ColumnKind::Timestamp),
    ]);
    for (name, ip, first) in rows {
        table.push(vec![name.into(), ip.into(), ts(&first)?])?;
    }
    Ok(table)
}

/// Incident count and share per type, least frequent first.
pub fn report_frequent_types(store: &Store) -> Result<(ReportTable, ChartSeries), QueryError> {
    let counts: Vec<(String, i64)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT t.name, count(i.incidentid) AS cnt
             FROM types t JOIN incidents i ON t.typeid = i.type
             GROUP BY t.typeid
             ORDER BY cnt ASC, t.name ASC",
        )?;
        let rows = stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let total: i64 = counts.iter().map(|(_, n)| n).sum();

    let mut table = ReportTable::new(vec![
        Column::new("name", ColumnKind::Text),
        Column::new("cnt", ColumnKind::Integer),
        Column::new("pct", ColumnKind::Real),
    ]);
    let (mut labels, mut values) = (Vec::new(), Vec::new());
    for (name, n) in counts {
        let pct = percent(n, total);
        table.push(vec![name.clone().into(), n.into(), pct.into()])?;
        labels.push(name);
        values.push(pct);
    }
    let chart = ChartSeries::new("Incidents by type (%)", ChartKind::Pie, labels, values)?;
    Ok((table, chart))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsBucket {
    #[default]
    PerDay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackStats {
    /// One row per calendar day from the first to the last incident day,
    /// days without incidents included as zero.
    pub daily: ReportTable,
    pub histogram: ChartSeries,
    pub summary: StatsSummary,
}

/// Population mean and standard deviation in one pass.
pub fn summarize(values: impl IntoIterator<Item = f64>) -> Option<StatsSummary> {
    let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    (n > 0).then(|| StatsSummary {
        mean,
        stddev: (m2 / n as f64).max(0.0).sqrt(),
        n,
    })
}

const HISTOGRAM_BINS: i64 = 10;

/// Frequency of daily counts in up to ten equal-width integer bins.
fn histogram(host: &str, counts: &[i64]) -> Result<ChartSeries, QueryError> {
    let lo = counts.iter().copied().min().unwrap_or(0);
    let hi = counts.iter().copied().max().unwrap_or(0);
    let span = hi - lo + 1;
    let bins = span.min(HISTOGRAM_BINS);
    let width = (span + bins - 1) / bins;
    let mut freq = vec![0f64; bins as usize];
    for &c in counts {
        freq[((c - lo) / width) as usize] += 1.0;
    }
    let labels = (0..bins)
        .map(|b| {
            let a = lo + b * width;
            format!("{a}-{}", a + width - 1)
        })
        .collect();
    ChartSeries::new(&format!("Daily incidents for {host}"), ChartKind::Histogram, labels, freq)
}

/// Daily incident counts for one host and their distribution.
pub fn attack_stats_for_host(store: &Store, host_name: &str) -> Result<AttackStats, QueryError> {
    attack_stats_bucketed(store, host_name, StatsBucket::PerDay)
}

pub fn attack_stats_bucketed(store: &Store, host_name: &str, bucket: StatsBucket) -> Result<AttackStats, QueryError> {
    let StatsBucket::PerDay = bucket;
    let host = store
        .host_by_name(host_name)?
        .ok_or_else(|| QueryError::UnknownHost(host_name.to_string()))?;
    let days: Vec<(String, i64)> = store.read(|c| {
        let mut stmt = c.prepare(
            "SELECT date(date) AS day, count(*) FROM incidents WHERE host = ?1 GROUP BY day ORDER BY day",
        )?;
        let rows = stmt.query_map(params![host.host_id.0], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    })?;
    let parse_day = |s: &str| {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| QueryError::Internal(format!("bad day {s:?}: {e}")))
    };
    let (Some(first), Some(last)) = (days.first(), days.last()) else {
        return Err(QueryError::NoIncidents(host_name.to_string()));
    };
    let (first, last) = (parse_day(&first.0)?, parse_day(&last.0)?);

    let mut filled = Vec::new();
    let mut known = days.iter().peekable();
    for day in first.iter_days().take_while(|d| *d <= last) {
        let label = day.format("%Y-%m-%d").to_string();
        let n = match known.peek() {
            Some((d, n)) if *d == label => {
                let n = *n;
                known.next();
                n
            }
            _ => 0,
        };
        filled.push((label, n));
    }

    let mut daily = ReportTable::new(vec![
        Column::new("day", ColumnKind::Text),
        Column::new("cnt", ColumnKind::Integer),
    ]);
    for (day, n) in &filled {
        daily.push(vec![day.clone().into(), (*n).into()])?;
    }
    let counts: Vec<i64> = filled.iter().map(|(_, n)| *n).collect();
    let summary = summarize(counts.iter().map(|&n| n as f64))
        .ok_or_else(|| QueryError::NoIncidents(host_name.to_string()))?;
    Ok(AttackStats {
        daily,
        histogram: histogram(host_name, &counts)?,
        summary,
    })
}

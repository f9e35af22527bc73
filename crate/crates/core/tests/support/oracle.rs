//! Random incident datasets and brute-force report oracles.
//!
//! The oracles work on the generated dataset alone: plain scans, counters
//! and sorts with no SQL, so they share nothing with the report code except
//! the output format.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::seq::SliceRandom;
use rand::Rng;

use uclog_core::store::{NewIncident, Store};

pub const DAYS: [&str; 7] = ["Sunday", "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday"];

#[derive(Debug, Clone)]
pub struct Dataset {
    pub hosts: Vec<(String, Option<Ipv4Addr>)>,
    pub types: Vec<String>,
    /// (host index, type index, time) in insertion order.
    pub incidents: Vec<(usize, usize, DateTime<Utc>)>,
}

pub fn description(ty: &str) -> String {
    format!("{ty} incidents")
}

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2003, 6, 1, 0, 0, 0).unwrap()
}

/// Seconds covered by generated incident times.
pub const SPAN_SECS: i64 = 580 * 86_400;

pub fn random_dataset(rng: &mut impl Rng, max_incidents: usize, max_hosts: usize, max_types: usize) -> Dataset {
    let n_hosts = rng.gen_range(1..=max_hosts);
    let mut hosts = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    while hosts.len() < n_hosts {
        let name = if rng.gen_bool(0.2) {
            format!("10.{}.{}.{}", rng.gen_range(0..4), rng.gen_range(0..8), rng.gen_range(1..255))
        } else {
            format!("h{}.d{}.example.edu", rng.gen_range(0..200), rng.gen_range(0..5))
        };
        if !seen.insert(name.clone()) {
            continue;
        }
        let ip = rng
            .gen_bool(0.5)
            .then(|| Ipv4Addr::new(141, 142, rng.gen_range(0..=255), rng.gen_range(1..255)));
        hosts.push((name, ip));
    }
    let pool = ["scan", "password", "dos", "INCBAND", "worm", "BruteForce", "PortScan", "DoS", "rootkit", "spam"];
    let n_types = rng.gen_range(1..=max_types.min(pool.len()));
    let mut types: Vec<String> = pool.choose_multiple(rng, n_types).map(|s| s.to_string()).collect();
    types.shuffle(rng);

    let n = rng.gen_range(0..=max_incidents);
    // skew hosts so counts differ and ties still happen
    let incidents = (0..n)
        .map(|_| {
            let h = (rng.gen_range(0.0f64..1.0).powi(2) * n_hosts as f64) as usize;
            let t = rng.gen_range(0..n_types);
            let when = if rng.gen_bool(0.05) {
                // whole-hour times make equal timestamps likely
                epoch() + Duration::hours(rng.gen_range(0..SPAN_SECS / 3600))
            } else {
                epoch() + Duration::seconds(rng.gen_range(0..SPAN_SECS))
            };
            (h.min(n_hosts - 1), t, when)
        })
        .collect();
    Dataset { hosts, types, incidents }
}

pub fn random_now(rng: &mut impl Rng) -> DateTime<Utc> {
    epoch() + Duration::seconds(rng.gen_range(-30 * 86_400..SPAN_SECS + 60 * 86_400))
}

/// Writes the dataset into an empty store: hosts and types first, then one
/// synthetic email per incident, all in insertion order.
pub fn load(store: &Store, d: &Dataset) {
    store
        .transaction("oracle", |tx| {
            let mut hids = Vec::new();
            for (name, ip) in &d.hosts {
                hids.push(tx.upsert_host(name, *ip, None)?.0.host_id);
            }
            let mut tids = Vec::new();
            for t in &d.types {
                tids.push(tx.upsert_type(t, Some(&description(t)))?.0.type_id);
            }
            for (h, t, when) in &d.incidents {
                let e = tx.insert_manual_email(when.date_naive(), "generated")?;
                tx.insert_incident(NewIncident {
                    date: *when,
                    host: hids[*h],
                    incident_type: tids[*t],
                    email: e.email_id,
                    comments: String::new(),
                })?;
            }
            Ok(())
        })
        .unwrap();
}

pub fn ts(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn ip(d: &Dataset, h: usize) -> String {
    d.hosts[h].1.map(|i| i.to_string()).unwrap_or_default()
}

fn pct(c: usize, total: usize) -> String {
    (100.0 * c as f64 / total as f64).to_string()
}

pub type Rows = Vec<Vec<String>>;

/// Incident indices ordered by time, ties by insertion order.
fn by_date(d: &Dataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.incidents.len()).collect();
    idx.sort_by_key(|&i| (d.incidents[i].2, i));
    idx
}

pub fn incident_list(d: &Dataset) -> Rows {
    by_date(d)
        .into_iter()
        .map(|i| {
            let (h, t, when) = &d.incidents[i];
            vec![ts(when), d.hosts[*h].0.clone(), description(&d.types[*t])]
        })
        .collect()
}

pub fn pct_by_dow(d: &Dataset) -> Rows {
    let mut counts = [0usize; 7];
    for (_, _, when) in &d.incidents {
        counts[when.weekday().num_days_from_sunday() as usize] += 1;
    }
    (0..7)
        .filter(|&i| counts[i] > 0)
        .map(|i| vec![DAYS[i].to_string(), pct(counts[i], d.incidents.len()), i.to_string()])
        .collect()
}

pub fn dist_by_hour(d: &Dataset, type_name: Option<&str>) -> Rows {
    let mut counts = [0usize; 24];
    for (_, t, when) in &d.incidents {
        if type_name.is_none_or(|n| d.types[*t] == n) {
            counts[when.hour() as usize] += 1;
        }
    }
    (0..24).map(|h| vec![h.to_string(), counts[h].to_string()]).collect()
}

pub fn host_history(d: &Dataset, host: &str) -> Rows {
    by_date(d)
        .into_iter()
        .filter(|&i| d.hosts[d.incidents[i].0].0 == host)
        .map(|i| {
            let (h, t, when) = &d.incidents[i];
            let id = (i + 1).to_string();
            vec![
                id.clone(),
                ts(when),
                d.hosts[*h].0.clone(),
                ip(d, *h),
                d.types[*t].clone(),
                description(&d.types[*t]),
                id,
                String::new(),
            ]
        })
        .collect()
}

fn ranked_hosts(d: &Dataset, keep: impl Fn(usize) -> bool, limit: usize) -> Rows {
    let mut counts = vec![0usize; d.hosts.len()];
    for (h, t, _) in &d.incidents {
        if keep(*t) {
            counts[*h] += 1;
        }
    }
    let mut hosts: Vec<usize> = (0..d.hosts.len()).filter(|&h| counts[h] > 0).collect();
    hosts.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then_with(|| d.hosts[a].0.cmp(&d.hosts[b].0)));
    hosts
        .into_iter()
        .take(limit)
        .map(|h| vec![d.hosts[h].0.clone(), ip(d, h), counts[h].to_string()])
        .collect()
}

pub fn top_compromised(d: &Dataset, limit: usize) -> Rows {
    ranked_hosts(d, |_| true, limit)
}

pub fn policy_violators(d: &Dataset, type_name: &str, limit: usize) -> Rows {
    ranked_hosts(d, |t| d.types[t] == type_name, limit)
}

pub fn monthly_trend(d: &Dataset, now: DateTime<Utc>) -> Rows {
    let lo = now - Duration::days(365);
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (_, _, when) in &d.incidents {
        if *when > lo && *when <= now {
            *counts.entry(when.month()).or_default() += 1;
        }
    }
    let cur = now.month();
    let mut rows: Vec<(u32, u32, usize)> = counts.into_iter().map(|(m, c)| ((m + 12 - cur - 1) % 12, m, c)).collect();
    rows.sort();
    rows.into_iter()
        .map(|(p, m, c)| vec![p.to_string(), m.to_string(), c.to_string()])
        .collect()
}

pub fn first_offenders(d: &Dataset, now: DateTime<Utc>, limit: usize) -> Rows {
    let lo = now - Duration::days(30);
    let mut first: BTreeMap<usize, DateTime<Utc>> = BTreeMap::new();
    for (h, _, when) in &d.incidents {
        let e = first.entry(*h).or_insert(*when);
        if when < e {
            *e = *when;
        }
    }
    let mut rows: Vec<(usize, DateTime<Utc>)> = first.into_iter().filter(|(_, f)| *f > lo && *f <= now).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| d.hosts[a.0].0.cmp(&d.hosts[b.0].0)));
    rows.into_iter()
        .take(limit)
        .map(|(h, f)| vec![d.hosts[h].0.clone(), ip(d, h), ts(&f)])
        .collect()
}

pub fn frequent_types(d: &Dataset) -> Rows {
    let mut counts = vec![0usize; d.types.len()];
    for (_, t, _) in &d.incidents {
        counts[*t] += 1;
    }
    let mut types: Vec<usize> = (0..d.types.len()).filter(|&t| counts[t] > 0).collect();
    types.sort_by(|&a, &b| counts[a].cmp(&counts[b]).then_with(|| d.types[a].cmp(&d.types[b])));
    types
        .into_iter()
        .map(|t| vec![d.types[t].clone(), counts[t].to_string(), pct(counts[t], d.incidents.len())])
        .collect()
}

/// Daily counts from the first to the last incident day of a host.
pub fn daily_counts(d: &Dataset, host: &str) -> Vec<(NaiveDate, usize)> {
    let mut days: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for (h, _, when) in &d.incidents {
        if d.hosts[*h].0 == host {
            *days.entry(when.date_naive()).or_default() += 1;
        }
    }
    let (Some(first), Some(last)) = (days.keys().next().copied(), days.keys().last().copied()) else {
        return Vec::new();
    };
    first
        .iter_days()
        .take_while(|day| *day <= last)
        .map(|day| (day, days.get(&day).copied().unwrap_or(0)))
        .collect()
}

/// Two-pass population mean and standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Oracle output for a catalog report, or `None` when the report should
/// fail for these parameters.
pub fn expected(d: &Dataset, report: &str, params: &BTreeMap<String, String>, now: DateTime<Utc>) -> Option<Rows> {
    let limit = params.get("limit").map(|l| l.parse().unwrap()).unwrap_or(10);
    let type_known = |t: &str| d.types.iter().any(|x| x == t);
    Some(match report {
        "incident_list" => incident_list(d),
        "pct_by_dow" => pct_by_dow(d),
        "dist_by_hour" => {
            let t = params.get("type").map(String::as_str);
            if t.is_some_and(|t| !type_known(t)) {
                return None;
            }
            dist_by_hour(d, t)
        }
        "host_history" => host_history(d, &params["host"]),
        "top_compromised" => top_compromised(d, limit),
        "policy_violators" => {
            if !type_known(&params["type"]) {
                return None;
            }
            policy_violators(d, &params["type"], limit)
        }
        "monthly_trend" => monthly_trend(d, now),
        "first_offenders" => first_offenders(d, now, limit),
        "frequent_types" => frequent_types(d),
        "attack_stats" => {
            let days = daily_counts(d, &params["host"]);
            if days.is_empty() {
                return None;
            }
            days.into_iter()
                .map(|(day, c)| vec![day.format("%Y-%m-%d").to_string(), c.to_string()])
                .collect()
        }
        other => panic!("no oracle for {other}"),
    })
}

/// Parameters exercising a report on this dataset.
pub fn params_for(d: &Dataset, report: &str, rng: &mut impl Rng) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    let host = || {
        d.incidents
            .first()
            .map(|(h, _, _)| d.hosts[*h].0.clone())
            .unwrap_or_else(|| d.hosts[0].0.clone())
    };
    match report {
        "host_history" | "attack_stats" => {
            p.insert("host".into(), host());
        }
        "policy_violators" => {
            p.insert("type".into(), d.types.choose(rng).unwrap().clone());
            p.insert("limit".into(), rng.gen_range(1..=12).to_string());
        }
        "dist_by_hour" if rng.gen_bool(0.5) => {
            p.insert("type".into(), d.types.choose(rng).unwrap().clone());
        }
        "top_compromised" | "first_offenders" if rng.gen_bool(0.5) => {
            p.insert("limit".into(), rng.gen_range(1..=15).to_string());
        }
        _ => {}
    }
    p
}

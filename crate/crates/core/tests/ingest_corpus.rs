use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use uclog_core::ingest::{parse_alert_email, parse_iso_time, Ingestor, NoResolver, SenderPolicy};
use uclog_core::store::{AuditAction, Store};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/alerts")
}

fn read_tsv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split('\t').map(str::to_string)).collect())
        .collect()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

fn senders() -> SenderPolicy {
    SenderPolicy::allow_list((0..3).map(|i| format!("sensor{i}@alerts.example.edu")))
}

#[test]
fn corpus_parses_to_the_manifest() {
    let manifest = read_tsv(&fixtures().join("manifest.tsv"));
    assert_eq!(manifest.len(), 50);
    let mut want: Vec<(String, String, String)> = manifest
        .iter()
        .map(|m| (m["host"].clone(), m["type"].clone(), m["time"].clone()))
        .collect();
    let mut got: Vec<(String, String, String)> = manifest
        .iter()
        .map(|m| {
            let raw = fs::read_to_string(fixtures().join("incoming").join(&m["file"])).unwrap();
            let msg = parse_alert_email(&raw).unwrap();
            assert_eq!(msg.raw, raw);
            (
                msg.host().to_string(),
                msg.alert_type().to_string(),
                msg.time.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            )
        })
        .collect();
    want.sort();
    got.sort();
    assert_eq!(got, want);
}

#[test]
fn sweep_conserves_every_message() {
    let dir = tempfile::tempdir().unwrap();
    let incoming = dir.path().join("incoming");
    copy_dir(&fixtures().join("incoming"), &incoming);
    copy_dir(&fixtures().join("malformed"), &incoming);

    let store = Arc::new(Store::open_in_memory().unwrap());
    let ing = Ingestor::new(store.clone(), Arc::new(NoResolver), senders());
    let report = ing.scan_drop_directory(dir.path()).unwrap();

    let manifest = read_tsv(&fixtures().join("manifest.tsv"));
    let dupes = manifest.iter().filter(|m| m["duplicate_of"] != "-").count();
    let hosts: std::collections::BTreeSet<_> = manifest.iter().map(|m| m["host"].clone()).collect();
    let types: std::collections::BTreeSet<_> = manifest.iter().map(|m| m["type"].clone()).collect();

    assert_eq!(report.total(), 55);
    assert_eq!((report.accepted, report.rejected, report.duplicates), (50, 5, dupes));
    assert_eq!((report.new_hosts, report.new_types), (hosts.len(), types.len()));
    let counts = store.counts().unwrap();
    assert_eq!((counts.hosts, counts.types, counts.incidents), (12, 4, 48));
    assert_eq!(counts.emails, 48);

    let bad = read_tsv(&fixtures().join("malformed-manifest.tsv"));
    for b in &bad {
        let r = report.rejections.iter().find(|r| r.file == b["file"]).unwrap();
        assert!(r.reason.starts_with(&b["reason_prefix"]), "{}: {}", r.file, r.reason);
        let sidecar = fs::read_to_string(dir.path().join("rejected").join(format!("{}.reason", b["file"]))).unwrap();
        assert_eq!(sidecar.trim_end(), r.reason);
    }

    // every stored row has exactly one insert entry in the audit trail
    let inserts = store
        .audit_entries(0, None)
        .unwrap()
        .into_iter()
        .filter(|e| e.action == AuditAction::Insert)
        .count() as u64;
    assert_eq!(inserts, counts.hosts + counts.types + counts.emails + counts.incidents);

    // each incident carries its manifest time
    let times: std::collections::BTreeSet<_> = manifest
        .iter()
        .filter(|m| m["duplicate_of"] == "-")
        .map(|m| parse_iso_time(&m["time"]).unwrap())
        .collect();
    for i in store.all_incidents().unwrap() {
        assert!(times.contains(&i.date));
    }
}

#[test]
fn sweep_is_idempotent_across_redelivery() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures().join("incoming"), dir.path());
    let store = Arc::new(Store::open_in_memory().unwrap());
    let ing = Ingestor::new(store.clone(), Arc::new(NoResolver), senders());
    ing.scan_drop_directory(dir.path()).unwrap();
    let before = store.counts().unwrap();

    // the same corpus delivered again adds nothing
    let again = dir.path().join("again");
    copy_dir(&fixtures().join("incoming"), &again);
    let report = ing.scan_drop_directory(&again).unwrap();
    assert_eq!((report.accepted, report.duplicates), (50, 50));
    assert_eq!(store.counts().unwrap(), before);
}

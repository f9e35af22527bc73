use std::sync::Arc;

use super::*;
use crate::store::{AuditAction, IncidentFilter, SenderVerdict};

fn alert(host: &str, ty: &str, time: &str) -> String {
    format!("From: sensor@alerts.example.edu\nSubject: test\n\nHOST: {host}\nTYPE: {ty}\nTIME: {time}\nDETAIL: d\n")
}

fn ingestor() -> Ingestor {
    Ingestor::new(
        Arc::new(Store::open_in_memory().unwrap()),
        Arc::new(NoResolver),
        SenderPolicy::default(),
    )
}

#[test]
fn fresh_message_adds_one_of_each() {
    let ing = ingestor();
    let before = ing.store().counts().unwrap();
    let out = ing.ingest_raw(&alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z")).unwrap();
    let after = ing.store().counts().unwrap();
    assert!(!out.deduplicated && out.new_host && out.new_type);
    assert_eq!(after.emails - before.emails, 1);
    assert_eq!(after.hosts - before.hosts, 1);
    assert_eq!(after.types - before.types, 1);
    assert_eq!(after.incidents - before.incidents, 1);
    // one audit entry per row written
    assert_eq!(after.audit - before.audit, 4);

    let row = &ing.store().get_incidents(&IncidentFilter::default()).unwrap()[0];
    assert_eq!(row.host.name, "a.b.c.d");
    assert_eq!(row.incident_type.name, "scan");
    assert_eq!(row.incident_type.description, "");
    assert_eq!(row.comments, "d");
    let email = ing.store().get_email(row.email_id).unwrap().unwrap();
    assert_eq!(email.source, alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z"));
    assert_eq!(email.verdict, SenderVerdict::Unchecked);
}

#[test]
fn identical_bytes_are_ingested_once() {
    let ing = ingestor();
    let raw = alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z");
    let first = ing.ingest_raw(&raw).unwrap();
    let audit = ing.store().counts().unwrap().audit;
    for _ in 0..5 {
        let again = ing.ingest_raw(&raw).unwrap();
        assert!(again.deduplicated);
        assert_eq!(again.incident, first.incident);
    }
    let c = ing.store().counts().unwrap();
    assert_eq!(c.incidents, 1);
    assert_eq!(c.audit, audit, "dedup writes nothing");
}

#[test]
fn messages_differing_only_in_time_are_distinct() {
    let ing = ingestor();
    ing.ingest_raw(&alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z")).unwrap();
    let b = ing.ingest_raw(&alert("a.b.c.d", "scan", "2004-03-01T02:06:00Z")).unwrap();
    assert!(!b.deduplicated && !b.new_host && !b.new_type);
    let c = ing.store().counts().unwrap();
    assert_eq!((c.hosts, c.types, c.incidents), (1, 1, 2));
}

#[test]
fn bad_host_name_propagates_constraint_violation() {
    let ing = ingestor();
    let err = ing.ingest_raw(&alert("www.example.com", "scan", "2004-03-01T02:05:00Z")).unwrap_err();
    assert!(matches!(err, IngestError::Store(StoreError::ConstraintViolation(_))), "{err}");
    assert_eq!(ing.store().counts().unwrap(), Default::default(), "rolled back as a unit");
}

#[test]
fn resolver_fills_in_ip_and_name() {
    let mut stub = StaticResolver::new();
    stub.insert("ws1.cs.example.edu", "141.142.2.8".parse().unwrap());
    let ing = Ingestor::new(Arc::new(Store::open_in_memory().unwrap()), Arc::new(stub), SenderPolicy::default());
    let a = ing.ingest_raw(&alert("ws1.cs.example.edu", "scan", "2004-03-01T02:05:00Z")).unwrap();
    let b = ing.ingest_raw(&alert("141.142.2.8", "scan", "2004-03-01T03:05:00Z")).unwrap();
    assert_eq!(a.incident.host, b.incident.host);
    let host = ing.store().get_host(a.incident.host).unwrap().unwrap();
    assert_eq!(host.ip, "141.142.2.8".parse().ok());
}

#[test]
fn allow_list_gates_senders() {
    let ing = Ingestor::new(
        Arc::new(Store::open_in_memory().unwrap()),
        Arc::new(NoResolver),
        SenderPolicy::allow_list(["sensor@alerts.example.edu"]),
    );
    let ok = ing.ingest_raw(&alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z")).unwrap();
    let email = ing.store().get_email(ok.incident.email).unwrap().unwrap();
    assert_eq!(email.verdict, SenderVerdict::Allowed);

    let spoofed = alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z").replace("sensor@", "mallory@");
    assert!(matches!(ing.ingest_raw(&spoofed), Err(IngestError::Unauthorized(_))));
    let anonymous = "HOST: a.b.c.d\nTYPE: scan\nTIME: 2004-03-01T02:05:00Z\n";
    assert!(matches!(ing.ingest_raw(anonymous), Err(IngestError::Unauthorized(_))));

    let named = alert("a.b.c.d", "scan", "2004-03-02T02:05:00Z")
        .replace("sensor@alerts.example.edu", "Sensor <SENSOR@alerts.example.edu>");
    assert!(ing.ingest_raw(&named).is_ok());
}

struct Always(bool);
impl SignatureCheck for Always {
    fn verify(&self, _: &AlertMessage) -> bool {
        self.0
    }
}

#[test]
fn signature_hook_runs_after_allow_list() {
    for (accept, expect_ok) in [(true, true), (false, false)] {
        let policy = SenderPolicy {
            allowed_senders: Some(vec!["sensor@alerts.example.edu".into()]),
            signature: Some(Arc::new(Always(accept))),
        };
        let ing = Ingestor::new(Arc::new(Store::open_in_memory().unwrap()), Arc::new(NoResolver), policy);
        let res = ing.ingest_raw(&alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z"));
        assert_eq!(res.is_ok(), expect_ok);
        if let Ok(o) = res {
            let e = ing.store().get_email(o.incident.email).unwrap().unwrap();
            assert_eq!(e.verdict, SenderVerdict::Signed);
        }
    }
}

#[test]
fn same_host_k_times_yields_one_host() {
    let ing = ingestor();
    for m in 0..20 {
        ing.ingest_raw(&alert("a.b.c.d", "scan", &format!("2004-03-01T02:{m:02}:00Z"))).unwrap();
    }
    assert_eq!(ing.store().counts().unwrap().hosts, 1);
}

#[test]
fn followup_is_an_email_not_an_incident() {
    let ing = ingestor();
    let first = ing.ingest_raw(&alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z")).unwrap();
    let before = ing.store().counts().unwrap();
    let raw = "Date: Tue, 2 Mar 2004 09:00:00 +0000\nFrom: eng@example.edu\n\nLooked at this, it is the lab scanner again.\n";
    let updated = ing.attach_followup(first.incident.incident_id, raw).unwrap();
    let after = ing.store().counts().unwrap();
    assert_eq!(after.incidents, before.incidents);
    assert_eq!(after.emails, before.emails + 1);
    assert!(updated.comments.ends_with(&format!("[follow-up email:{}]", first.incident.email.0 + 1)));
    let log = ing.store().audit_tail(2).unwrap();
    assert_eq!(log.iter().map(|e| e.action).collect::<Vec<_>>(), vec![AuditAction::Insert, AuditAction::Update]);
}

#[test]
fn concurrent_duplicates_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path().join("db")).unwrap());
    let ing = Arc::new(Ingestor::new(store.clone(), Arc::new(NoResolver), SenderPolicy::default()));
    let raw = alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z");
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let ing = ing.clone();
            let raw = raw.clone();
            std::thread::spawn(move || ing.ingest_raw(&raw).unwrap())
        })
        .collect();
    let outcomes: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(outcomes.iter().filter(|o| !o.deduplicated).count(), 1);
    assert_eq!(store.counts().unwrap().incidents, 1);
}

mod sweep {
    use super::*;
    use std::fs;

    fn put(dir: &std::path::Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let report = ingestor().scan_drop_directory(dir.path()).unwrap();
        assert_eq!(report, IngestReport::default());
    }

    #[test]
    fn three_good_two_bad() {
        let dir = tempfile::tempdir().unwrap();
        let incoming = dir.path().join("incoming");
        fs::create_dir(&incoming).unwrap();
        put(&incoming, "a.eml", &alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z"));
        put(&incoming, "b.eml", &alert("e.f.g.h", "dos", "2004-03-01T03:05:00Z"));
        put(&incoming, "c.eml", &alert("a.b.c.d", "dos", "2004-03-01T04:05:00Z"));
        put(&incoming, "x.eml", "HOST: a.b.c.d\nTIME: 2004-03-01T02:05:00Z\n");
        put(&incoming, "y.eml", "no fields at all");
        fs::create_dir(incoming.join("subdir")).unwrap();

        let ing = ingestor();
        let report = ing.scan_drop_directory(dir.path()).unwrap();
        assert_eq!((report.accepted, report.rejected), (3, 2));
        assert_eq!((report.new_hosts, report.new_types), (2, 2));
        assert_eq!(report.total(), 5);

        let names = |d: &str| {
            let mut v: Vec<_> = fs::read_dir(dir.path().join(d))
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect();
            v.sort();
            v
        };
        assert_eq!(names("processed"), vec!["a.eml", "b.eml", "c.eml"]);
        assert_eq!(names("rejected"), vec!["x.eml", "x.eml.reason", "y.eml", "y.eml.reason"]);
        assert_eq!(names("incoming"), vec!["subdir"]);
        let reason = fs::read_to_string(dir.path().join("rejected/x.eml.reason")).unwrap();
        assert_eq!(reason, "parse error: missing TYPE\n");
        assert!(!dir.path().join(".uclog-ingest.lock").exists());

        // rerun is a no-op
        let again = ing.scan_drop_directory(dir.path()).unwrap();
        assert_eq!(again, IngestReport::default());
        assert_eq!(ing.store().counts().unwrap().incidents, 3);
    }

    #[test]
    fn flat_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "a.eml", &alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z"));
        let report = ingestor().scan_drop_directory(dir.path()).unwrap();
        assert_eq!(report.accepted, 1);
        assert!(dir.path().join("processed/a.eml").exists());
    }

    #[test]
    fn redelivered_file_with_same_name_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let ing = ingestor();
        let raw = alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z");
        put(dir.path(), "a.eml", &raw);
        ing.scan_drop_directory(dir.path()).unwrap();
        put(dir.path(), "a.eml", &raw);
        let r = ing.scan_drop_directory(dir.path()).unwrap();
        assert_eq!((r.accepted, r.duplicates, r.incidents_added()), (1, 1, 0));
        assert!(dir.path().join("processed/a.eml.1").exists());
    }

    #[test]
    fn held_lock_refuses_second_sweeper() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(".uclog-ingest.lock"), "1").unwrap();
        put(dir.path(), "a.eml", &alert("a.b.c.d", "scan", "2004-03-01T02:05:00Z"));
        assert!(matches!(ingestor().scan_drop_directory(dir.path()), Err(IngestError::Busy(_))));
        assert!(dir.path().join("a.eml").exists());
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingestor().scan_drop_directory(&dir.path().join("nope")).unwrap_err();
        assert!(matches!(err, IngestError::Io(_)));
    }
}

//! In-process service with seeded data, shared by the API tests and the
//! acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::Value as Json;
use tower::ServiceExt;

use uclog_core::auth::{create_account, AccessPolicy, PasswordHasher, Role, SessionManager};
use uclog_core::clock::Clock;
use uclog_core::correlator::{Correlator, FlowCache, LogSource, StubRunner, TransportKind};
use uclog_core::ingest::{NoResolver, SenderPolicy};
use uclog_core::store::{Owner, Store};
use uclog_server::{router, AppState};

pub const ADMIN: (&str, &str) = ("admin", "admin-secret");
pub const NORMAL: (&str, &str) = ("alice", "alice-secret");
pub const SESSION_TTL: i64 = 600;

/// Clock the tests can move forward.
pub struct TestClock(Mutex<DateTime<Utc>>);

impl TestClock {
    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap() += by;
    }
}

impl Clock for TestClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

pub fn fixed_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2004, 6, 15, 12, 0, 0).unwrap()
}

/// The planted incident and the three peers its host talked to around it.
pub fn planted_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2004, 3, 1, 12, 0, 0).unwrap()
}

pub const PLANTED_HOST_IP: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 5);
pub const PLANTED_PEERS: [Ipv4Addr; 3] = [
    Ipv4Addr::new(192, 0, 2, 10),
    Ipv4Addr::new(192, 0, 2, 20),
    Ipv4Addr::new(198, 51, 100, 30),
];

pub struct Harness {
    pub app: Router,
    pub store: Arc<Store>,
    pub stub: Arc<StubRunner>,
    pub clock: Arc<TestClock>,
    pub planted_incident: i64,
    alerts: AtomicUsize,
    _dir: tempfile::TempDir,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Json {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

fn seed(store: &Store) -> i64 {
    let owner = Owner {
        name: Some("Pat Owner".into()),
        email: Some("pat@example.edu".into()),
    };
    let ws1 = store
        .upsert_host("seed", "ws1.cs.example.edu", Some(PLANTED_HOST_IP), Some(&owner))
        .unwrap();
    let mail = store
        .upsert_host("seed", "mail.ncsa.example.edu", Some(Ipv4Addr::new(10, 0, 0, 9)), Some(&owner))
        .unwrap();
    let lab = store.upsert_host("seed", "lab3.cs.example.edu", None, None).unwrap();
    let dos = store.upsert_type("seed", "DoS", Some("denial of service")).unwrap();
    let pw = store.upsert_type("seed", "password", Some("password guessing")).unwrap();
    let planted = store
        .insert_manual_incident("seed", planted_time(), ws1.host_id, dos.type_id, "planted")
        .unwrap();
    let t0 = Utc.with_ymd_and_hms(2004, 5, 1, 3, 0, 0).unwrap();
    for i in 0..6 {
        let (h, ty) = match i % 3 {
            0 => (&ws1, &pw),
            1 => (&mail, &dos),
            _ => (&lab, &pw),
        };
        store
            .insert_manual_incident("seed", t0 + Duration::hours(31 * i), h.host_id, ty.type_id, "")
            .unwrap();
    }
    planted.incident_id.0
}

fn flow_line(t: DateTime<Utc>, src: Ipv4Addr, dst: Ipv4Addr, dport: u16) -> String {
    format!("{} 2.0 tcp {src} 51000 {dst} {dport} 4 320 S", t.timestamp())
}

impl Harness {
    pub fn new(strict_binary: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open_in_memory().unwrap());
        let planted_incident = seed(&store);
        let hasher = PasswordHasher { rounds: 1000 };
        create_account(&store, &hasher, "setup", ADMIN.0, ADMIN.1, Role::Admin).unwrap();
        create_account(&store, &hasher, "setup", NORMAL.0, NORMAL.1, Role::Normal).unwrap();

        let t = planted_time();
        let mut lines = vec![
            flow_line(t - Duration::minutes(20), PLANTED_HOST_IP, PLANTED_PEERS[0], 22),
            flow_line(t + Duration::minutes(1), PLANTED_HOST_IP, PLANTED_PEERS[1], 6667),
            flow_line(t + Duration::minutes(29), PLANTED_PEERS[2], PLANTED_HOST_IP, 445),
            // Outside the hour window.
            flow_line(t + Duration::minutes(30), PLANTED_HOST_IP, Ipv4Addr::new(203, 0, 113, 1), 80),
            flow_line(t - Duration::minutes(31), PLANTED_HOST_IP, Ipv4Addr::new(203, 0, 113, 2), 80),
        ];
        for i in 0..20 {
            lines.push(flow_line(
                t + Duration::minutes(i),
                Ipv4Addr::new(10, 0, 1, i as u8),
                Ipv4Addr::new(203, 0, 113, 99),
                53,
            ));
        }
        let flows = dir.path().join("flows");
        std::fs::create_dir_all(&flows).unwrap();
        std::fs::write(flows.join("2004-03-01.flows"), lines.join("\n") + "\n").unwrap();

        let source = LogSource {
            source_id: "netflow".into(),
            display_name: "Border flows".into(),
            transport: TransportKind::Remote,
            endpoint: Some("logs@flowhost".into()),
            path_pattern: format!("{}/{{date}}.flows", flows.display()),
            command_template: "flowgrep {path} {ip} {start} {end}".into(),
            cache_ttl: 0,
        };
        let clock = Arc::new(TestClock(Mutex::new(fixed_now())));
        let stub = Arc::new(StubRunner::new());
        let correlator = Correlator::new([source], FlowCache::open(dir.path().join("cache")).unwrap())
            .unwrap()
            .with_runner(stub.clone())
            .with_store(store.clone())
            .with_clock(clock.clone());
        let state = AppState::new(store.clone())
            .with_sessions(SessionManager::new(SESSION_TTL as u64, hasher))
            .with_policy(AccessPolicy { strict_binary })
            .with_correlator(Arc::new(correlator))
            .with_ingest(Arc::new(NoResolver), SenderPolicy::default())
            .with_clock(clock.clone());
        Self {
            app: router(state, None),
            store,
            stub,
            clock,
            planted_incident,
            alerts: AtomicUsize::new(0),
            _dir: dir,
        }
    }

    pub async fn call(&self, method: Method, uri: &str, token: Option<&str>, body: Option<&str>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) if b.starts_with('{') => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            Some(b) => req.header("content-type", "message/rfc822").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply {
            status,
            content_type,
            body,
        }
    }

    pub async fn login(&self, who: (&str, &str)) -> String {
        let body = format!(r#"{{"username":"{}","password":"{}"}}"#, who.0, who.1);
        let r = self.call(Method::POST, "/api/login", None, Some(&body)).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text());
        r.json()["token"].as_str().unwrap().to_string()
    }

    /// A well-formed alert never submitted before.
    pub fn fresh_alert(&self) -> String {
        let n = self.alerts.fetch_add(1, Ordering::SeqCst);
        format!(
            "Date: Mon, 10 May 2004 08:{:02}:00 +0000\nFrom: sensor0@alerts.example.edu\nSubject: alert {n}\n\nHOST: new{n}.cs.example.edu\nTYPE: worm\nDETAIL: submitted over the API {n}\n",
            n % 60
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Caller {
    Anonymous,
    Normal,
    Admin,
}

pub const CALLERS: [Caller; 3] = [Caller::Anonymous, Caller::Normal, Caller::Admin];

#[derive(Debug, Clone, Copy)]
pub enum Payload {
    None,
    Json(&'static str),
    FreshAlert,
    FreshUser,
    Raw(&'static str),
}

/// One route exercised by the matrix, with the documented status for a
/// normal session and for an admin session. Anonymous callers always get
/// 401 except on login.
pub struct Cell {
    pub method: Method,
    pub path: String,
    pub payload: Payload,
    pub normal: StatusCode,
    pub admin: StatusCode,
    pub public: bool,
}

pub fn route_matrix(planted: i64) -> Vec<Cell> {
    use StatusCode as S;
    let cell = |method: Method, path: String, payload, normal, admin| Cell {
        method,
        path,
        payload,
        normal,
        admin,
        public: false,
    };
    let mut cells = vec![
        Cell {
            method: Method::POST,
            path: "/api/login".into(),
            payload: Payload::Json(r#"{"username":"alice","password":"wrong"}"#),
            normal: S::UNAUTHORIZED,
            admin: S::UNAUTHORIZED,
            public: true,
        },
        cell(Method::POST, "/api/logout".into(), Payload::None, S::NO_CONTENT, S::NO_CONTENT),
        cell(Method::GET, "/api/incidents".into(), Payload::None, S::OK, S::OK),
        cell(Method::GET, "/api/incidents?host=ws1.cs.example.edu&limit=2".into(), Payload::None, S::OK, S::OK),
        cell(Method::GET, "/api/incidents?from=yesterday".into(), Payload::None, S::UNPROCESSABLE_ENTITY, S::UNPROCESSABLE_ENTITY),
        cell(Method::GET, format!("/api/incidents/{planted}"), Payload::None, S::OK, S::OK),
        cell(Method::GET, "/api/incidents/99999".into(), Payload::None, S::NOT_FOUND, S::NOT_FOUND),
        cell(
            Method::GET,
            format!("/api/incidents/{planted}/flows?source=netflow&window=hour"),
            Payload::None,
            S::FORBIDDEN,
            S::OK,
        ),
        cell(
            Method::GET,
            format!("/api/incidents/{planted}/flows?source=nosuch"),
            Payload::None,
            S::FORBIDDEN,
            S::NOT_FOUND,
        ),
        cell(
            Method::GET,
            format!("/api/incidents/{planted}/flows?source=netflow&window=year"),
            Payload::None,
            S::FORBIDDEN,
            S::UNPROCESSABLE_ENTITY,
        ),
        cell(
            Method::GET,
            "/api/incidents/99999/flows?source=netflow".into(),
            Payload::None,
            S::FORBIDDEN,
            S::NOT_FOUND,
        ),
        cell(Method::GET, "/api/reports".into(), Payload::None, S::OK, S::OK),
        cell(Method::GET, "/api/reports/nosuch".into(), Payload::None, S::NOT_FOUND, S::NOT_FOUND),
        cell(Method::GET, "/api/reports/host_history".into(), Payload::None, S::UNPROCESSABLE_ENTITY, S::UNPROCESSABLE_ENTITY),
        cell(Method::GET, "/api/reports/attack_stats?host=nosuch.example.edu".into(), Payload::None, S::NOT_FOUND, S::NOT_FOUND),
        cell(
            Method::POST,
            "/api/query".into(),
            Payload::Json(r#"{"sql":"SELECT COUNT(*) AS n FROM incidents"}"#),
            S::FORBIDDEN,
            S::OK,
        ),
        cell(
            Method::POST,
            "/api/query".into(),
            Payload::Json(r#"{"sql":"DELETE FROM incidents"}"#),
            S::FORBIDDEN,
            S::UNPROCESSABLE_ENTITY,
        ),
        cell(Method::GET, "/api/sources".into(), Payload::None, S::FORBIDDEN, S::OK),
        cell(Method::POST, "/api/alerts".into(), Payload::FreshAlert, S::FORBIDDEN, S::CREATED),
        cell(Method::POST, "/api/alerts".into(), Payload::Raw("not an alert"), S::FORBIDDEN, S::UNPROCESSABLE_ENTITY),
        cell(Method::GET, "/api/users".into(), Payload::None, S::FORBIDDEN, S::OK),
        cell(Method::POST, "/api/users".into(), Payload::FreshUser, S::FORBIDDEN, S::CREATED),
        cell(
            Method::POST,
            "/api/users".into(),
            Payload::Json(r#"{"username":"bob","password":"pw","role":"root"}"#),
            S::FORBIDDEN,
            S::UNPROCESSABLE_ENTITY,
        ),
        cell(Method::GET, "/api/audit".into(), Payload::None, S::FORBIDDEN, S::OK),
        cell(Method::GET, "/api/audit?limit=5".into(), Payload::None, S::FORBIDDEN, S::OK),
    ];
    for r in uclog_core::query::CATALOG {
        let params = match r.name {
            "host_history" | "attack_stats" => "?host=ws1.cs.example.edu",
            "policy_violators" => "?type=password",
            _ => "",
        };
        cells.push(cell(Method::GET, format!("/api/reports/{}{params}", r.name), Payload::None, S::OK, S::OK));
        cells.push(cell(Method::GET, format!("/api/reports/{}.tsv{params}", r.name), Payload::None, S::OK, S::OK));
    }
    cells
}

impl Harness {
    /// Runs one cell with a fresh session for the caller.
    pub async fn run_cell(&self, cell: &Cell, caller: Caller) -> Reply {
        let token = match caller {
            Caller::Anonymous => None,
            Caller::Normal => Some(self.login(NORMAL).await),
            Caller::Admin => Some(self.login(ADMIN).await),
        };
        let n = self.alerts.load(Ordering::SeqCst);
        let owned;
        let body = match cell.payload {
            Payload::None => None,
            Payload::Json(j) | Payload::Raw(j) => Some(j),
            Payload::FreshAlert => {
                owned = self.fresh_alert();
                Some(owned.as_str())
            }
            Payload::FreshUser => {
                self.alerts.fetch_add(1, Ordering::SeqCst);
                owned = format!(r#"{{"username":"user{n}","password":"pw{n}","role":"normal"}}"#);
                Some(owned.as_str())
            }
        };
        self.call(cell.method.clone(), &cell.path, token.as_deref(), body).await
    }
}

pub fn expected(cell: &Cell, caller: Caller, strict_binary: bool) -> StatusCode {
    match caller {
        Caller::Anonymous if cell.public => cell.normal,
        Caller::Anonymous => StatusCode::UNAUTHORIZED,
        Caller::Admin => cell.admin,
        Caller::Normal if cell.public => cell.normal,
        // Logging out needs a session but no capability.
        Caller::Normal if strict_binary && cell.path != "/api/logout" => StatusCode::FORBIDDEN,
        Caller::Normal => cell.normal,
    }
}

pub const PRIVILEGED_KEYS: [&str; 5] = ["source", "owner_name", "owner_email", "actor", "password_digest"];

/// Every object key anywhere in the document.
pub fn json_keys(v: &Json) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(v) = stack.pop() {
        match v {
            Json::Object(m) => {
                for (k, child) in m {
                    keys.insert(k.clone());
                    stack.push(child);
                }
            }
            Json::Array(a) => stack.extend(a),
            _ => {}
        }
    }
    keys
}

/// Privileged fields present in a response body, whether JSON or TSV.
pub fn privileged_fields(reply: &Reply) -> Vec<String> {
    let is_json = reply.content_type.as_deref().is_some_and(|c| c.starts_with("application/json"));
    let names: BTreeSet<String> = if is_json {
        json_keys(&reply.json())
    } else {
        String::from_utf8_lossy(&reply.body)
            .lines()
            .next()
            .map(|h| h.split('\t').map(str::to_string).collect())
            .unwrap_or_default()
    };
    PRIVILEGED_KEYS
        .iter()
        .filter(|k| names.contains(**k))
        .map(|k| k.to_string())
        .collect()
}

//! Accounts, password digests, sessions and the role capability matrix.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::store::{AuditAction, AuditEntry, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Normal,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "admin" => Some(Role::Admin),
            "normal" => Some(Role::Normal),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Public view of an account. The password digest is deliberately absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub username: String,
    pub role: Role,
}

/// Actions a session may be allowed to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    ViewIncidents,
    ViewIncidentDetail,
    RunCannedReports,
    ExportTsv,
    RunCustomQuery,
    FlowDrillDown,
    ViewSources,
    ViewEmailSource,
    ViewOwnerContact,
    ManageUsers,
    ViewAudit,
    TriggerIngest,
}

impl Capability {
    pub const ALL: [Capability; 12] = [
        Capability::ViewIncidents,
        Capability::ViewIncidentDetail,
        Capability::RunCannedReports,
        Capability::ExportTsv,
        Capability::RunCustomQuery,
        Capability::FlowDrillDown,
        Capability::ViewSources,
        Capability::ViewEmailSource,
        Capability::ViewOwnerContact,
        Capability::ManageUsers,
        Capability::ViewAudit,
        Capability::TriggerIngest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::ViewIncidents => "view_incidents",
            Capability::ViewIncidentDetail => "view_incident_detail",
            Capability::RunCannedReports => "run_canned_reports",
            Capability::ExportTsv => "export_tsv",
            Capability::RunCustomQuery => "run_custom_query",
            Capability::FlowDrillDown => "flow_drill_down",
            Capability::ViewSources => "view_sources",
            Capability::ViewEmailSource => "view_email_source",
            Capability::ViewOwnerContact => "view_owner_contact",
            Capability::ManageUsers => "manage_users",
            Capability::ViewAudit => "view_audit",
            Capability::TriggerIngest => "trigger_ingest",
        }
    }
}

impl FromStr for Capability {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Capability::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

/// Access policy. Admins may do everything. Normal users get the read-only
/// tier unless `strict_binary` collapses them to deny-everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct AccessPolicy {
    pub strict_binary: bool,
}

impl AccessPolicy {
    pub fn authorize(&self, role: Role, capability: Capability) -> Decision {
        let allowed = match role {
            Role::Admin => true,
            Role::Normal if self.strict_binary => false,
            Role::Normal => matches!(
                capability,
                Capability::ViewIncidents
                    | Capability::ViewIncidentDetail
                    | Capability::RunCannedReports
                    | Capability::ExportTsv
            ),
        };
        if allowed {
            Decision::Allow
        } else {
            Decision::Deny
        }
    }

    /// Unknown capability names are denied for every role.
    pub fn authorize_named(&self, role: Role, capability: &str) -> Decision {
        match capability.parse() {
            Ok(c) => self.authorize(role, c),
            Err(()) => Decision::Deny,
        }
    }
}

const DIGEST_SCHEME: &str = "pbkdf2-sha256";
const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

/// Salted PBKDF2-HMAC-SHA256 digests in the form
/// `pbkdf2-sha256$<rounds>$<salt hex>$<hash hex>`.
pub const DEFAULT_PBKDF2_ROUNDS: u32 = 210_000;

#[derive(Debug, Clone, Copy)]
pub struct PasswordHasher {
    pub rounds: u32,
}

impl Default for PasswordHasher {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_PBKDF2_ROUNDS,
        }
    }
}

impl PasswordHasher {
    pub fn hash(&self, password: &str) -> String {
        let mut salt = [0u8; SALT_LEN];
        rand::thread_rng().fill_bytes(&mut salt);
        let out = derive(password, &salt, self.rounds);
        format!("{DIGEST_SCHEME}${}${}${}", self.rounds, hex::encode(salt), hex::encode(out))
    }

    pub fn verify(&self, password: &str, digest: &str) -> bool {
        let mut parts = digest.split('$');
        let (Some(scheme), Some(rounds), Some(salt), Some(expected), None) =
            (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return false;
        };
        let (Ok(rounds), Ok(salt), Ok(expected)) = (rounds.parse::<u32>(), hex::decode(salt), hex::decode(expected))
        else {
            return false;
        };
        if scheme != DIGEST_SCHEME || expected.len() != HASH_LEN || rounds == 0 {
            return false;
        }
        constant_time_eq(&derive(password, &salt, rounds), &expected)
    }
}

fn derive(password: &str, salt: &[u8], rounds: u32) -> [u8; HASH_LEN] {
    let mut out = [0u8; HASH_LEN];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, rounds, &mut out);
    out
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub token: String,
    pub username: String,
    pub role: Role,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("authentication failed")]
    AuthFailed,
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// In-memory session table. Sessions are immutable once issued.
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Session>>,
    ttl: TimeDelta,
    hasher: PasswordHasher,
}

impl SessionManager {
    pub fn new(ttl_secs: u64, hasher: PasswordHasher) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            ttl: TimeDelta::seconds(ttl_secs as i64),
            hasher,
        }
    }

    pub fn hasher(&self) -> PasswordHasher {
        self.hasher
    }

    /// Checks credentials and issues a session. A `login` audit entry is
    /// written whether or not the attempt succeeds.
    pub fn authenticate(
        &self,
        store: &Store,
        username: &str,
        password: &str,
        now: DateTime<Utc>,
    ) -> Result<Session, AuthError> {
        let user = store.find_user(username)?;
        let ok = match &user {
            Some(u) => self.hasher.verify(password, &u.password_digest),
            None => {
                // Same cost as a real check so unknown users are not distinguishable by timing.
                let _ = derive(password, &[0u8; SALT_LEN], self.hasher.rounds);
                false
            }
        };
        store.record_audit(&AuditEntry::now(
            username,
            AuditAction::Login,
            format!("user:{username}"),
            if ok { "success" } else { "failure" },
        ))?;
        let user = match (ok, user) {
            (true, Some(u)) => u,
            _ => return Err(AuthError::AuthFailed),
        };

        let mut raw = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut raw);
        let session = Session {
            token: hex::encode(raw),
            username: user.username,
            role: user.role,
            expires_at: now + self.ttl,
        };
        self.sessions.write().insert(session.token.clone(), session.clone());
        Ok(session)
    }

    /// Returns the session for `token` if it exists and has not expired.
    pub fn validate(&self, token: &str, now: DateTime<Utc>) -> Option<Session> {
        let sessions = self.sessions.read();
        let s = sessions.get(token)?;
        (now < s.expires_at).then(|| s.clone())
    }

    pub fn revoke(&self, token: &str) -> bool {
        self.sessions.write().remove(token).is_some()
    }

    pub fn purge_expired(&self, now: DateTime<Utc>) -> usize {
        let mut sessions = self.sessions.write();
        let before = sessions.len();
        sessions.retain(|_, s| now < s.expires_at);
        before - sessions.len()
    }
}

/// Creates an account with a freshly salted digest.
pub fn create_account(
    store: &Store,
    hasher: &PasswordHasher,
    actor: &str,
    username: &str,
    password: &str,
    role: Role,
) -> Result<UserAccount, StoreError> {
    if password.is_empty() {
        return Err(StoreError::ConstraintViolation("password must be non-empty".into()));
    }
    store.create_user(actor, username, &hasher.hash(password), role)?;
    Ok(UserAccount {
        username: username.to_string(),
        role,
    })
}

pub fn list_accounts(store: &Store) -> Result<Vec<UserAccount>, StoreError> {
    Ok(store
        .list_users()?
        .into_iter()
        .map(|u| UserAccount {
            username: u.username,
            role: u.role,
        })
        .collect())
}

//! Security data management core: a central incident store, alert
//! ingestion, canned forensic reports, and on-demand correlation with flow
//! logs that stay on remote log servers.

pub mod auth;
pub mod clock;
pub mod config;
pub mod correlator;
pub mod digest;
pub mod ingest;
pub mod query;
pub mod store;

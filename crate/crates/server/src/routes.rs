use std::collections::BTreeMap;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use uclog_core::auth::{create_account, list_accounts, Capability, Role};
use uclog_core::correlator::WindowKind;
use uclog_core::ingest::parse_iso_time;
use uclog_core::query::{export_tsv, run_custom_query, run_report, CATALOG};
use uclog_core::store::{AuditAction, AuditEntry, IncidentFilter, IncidentId, IncidentRow};

use crate::views::{EmailView, IncidentDetail, IncidentPage, IncidentView};
use crate::{ApiError, AppState, Authed};

type Params = Query<BTreeMap<String, String>>;
type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn api() -> Router<AppState> {
    Router::new()
        .route("/login", post(login))
        .route("/logout", post(logout))
        .route("/incidents", get(incidents))
        .route("/incidents/{id}", get(incident))
        .route("/incidents/{id}/flows", get(incident_flows))
        .route("/reports", get(reports))
        .route("/reports/{name}", get(report))
        .route("/query", post(custom_query))
        .route("/sources", get(sources))
        .route("/alerts", post(submit_alert))
        .route("/users", get(users).post(add_user))
        .route("/audit", get(audit_log))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    b.map(|Json(v)| v).map_err(|e| ApiError::invalid(e.body_text()))
}

fn only_params(params: &BTreeMap<String, String>, allowed: &[&str]) -> ApiResult<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ApiError::invalid(format!("unknown parameter {k:?}"))),
        None => Ok(()),
    }
}

fn usize_param(params: &BTreeMap<String, String>, name: &str) -> ApiResult<Option<usize>> {
    params
        .get(name)
        .map(|v| v.parse().map_err(|_| ApiError::invalid(format!("{name} must be a non-negative integer"))))
        .transpose()
}

fn incident_id(raw: &str) -> ApiResult<IncidentId> {
    raw.parse()
        .map(IncidentId)
        .map_err(|_| ApiError::not_found(format!("no incident {raw:?}")))
}

fn audit(state: &AppState, actor: &str, action: AuditAction, entity: String, detail: String) -> ApiResult<()> {
    state.store.record_audit(&AuditEntry {
        timestamp: state.clock.now(),
        actor: actor.to_string(),
        action,
        entity,
        detail,
    })?;
    Ok(())
}

#[derive(Deserialize)]
struct Credentials {
    username: String,
    password: String,
}

async fn login(State(state): State<AppState>, b: Result<Json<Credentials>, JsonRejection>) -> ApiResult<Response> {
    let creds = body(b)?;
    let session = blocking(move || {
        let now = state.clock.now();
        Ok(state
            .sessions
            .authenticate(&state.store, &creds.username, &creds.password, now)?)
    })
    .await?;
    Ok(Json(session).into_response())
}

async fn logout(State(state): State<AppState>, Authed(session): Authed) -> ApiResult<StatusCode> {
    state.sessions.revoke(&session.token);
    audit(
        &state,
        &session.username,
        AuditAction::Login,
        format!("user:{}", session.username),
        "logout".into(),
    )?;
    Ok(StatusCode::NO_CONTENT)
}

async fn incidents(
    State(state): State<AppState>,
    Authed(session): Authed,
    Query(params): Params,
) -> ApiResult<Json<IncidentPage>> {
    state.require(&session, Capability::ViewIncidents)?;
    only_params(&params, &["host", "type", "from", "to", "limit", "offset"])?;
    let time = |name: &str| {
        params
            .get(name)
            .map(|v| parse_iso_time(v).ok_or_else(|| ApiError::invalid(format!("{name} must be an ISO-8601 time"))))
            .transpose()
    };
    let all = IncidentFilter {
        host_name: params.get("host").cloned(),
        type_name: params.get("type").cloned(),
        from: time("from")?,
        to: time("to")?,
        limit: None,
        offset: 0,
    };
    let offset = usize_param(&params, "offset")?.unwrap_or(0);
    let limit = usize_param(&params, "limit")?;
    let rows = state.store.get_incidents(&all)?;
    let total = rows.len();
    let vis = state.visibility(&session);
    let incidents = rows
        .into_iter()
        .skip(offset)
        .take(limit.unwrap_or(usize::MAX))
        .map(|r| IncidentView::new(r, vis))
        .collect();
    Ok(Json(IncidentPage {
        total,
        offset,
        incidents,
    }))
}

async fn incident(
    State(state): State<AppState>,
    Authed(session): Authed,
    Path(id): Path<String>,
) -> ApiResult<Json<IncidentDetail>> {
    state.require(&session, Capability::ViewIncidentDetail)?;
    let id = incident_id(&id)?;
    let store = &state.store;
    let inc = store
        .get_incident(id)?
        .ok_or_else(|| ApiError::not_found(format!("no incident {id}")))?;
    let host = store
        .get_host(inc.host)?
        .ok_or_else(|| ApiError::internal(format!("incident {id} lost its host")))?;
    let incident_type = store
        .get_type(inc.incident_type)?
        .ok_or_else(|| ApiError::internal(format!("incident {id} lost its type")))?;
    let email = store.get_email(inc.email)?;
    let vis = state.visibility(&session);
    let row = IncidentRow {
        incident_id: inc.incident_id,
        date: inc.date,
        host,
        incident_type,
        email_id: inc.email,
        comments: inc.comments,
    };
    Ok(Json(IncidentDetail {
        incident: IncidentView::new(row, vis),
        email: email.map(|e| EmailView::new(e, vis)),
    }))
}

async fn incident_flows(
    State(state): State<AppState>,
    Authed(session): Authed,
    Path(id): Path<String>,
    Query(params): Params,
) -> ApiResult<Response> {
    state.require(&session, Capability::FlowDrillDown)?;
    only_params(&params, &["source", "window"])?;
    let id = incident_id(&id)?;
    let source = params
        .get("source")
        .cloned()
        .ok_or_else(|| ApiError::invalid("source is required"))?;
    let window = match params.get("window") {
        None => WindowKind::Hour,
        Some(w) => WindowKind::parse(w).ok_or_else(|| ApiError::invalid("window must be hour, day or week"))?,
    };
    let correlator = state
        .correlator
        .clone()
        .ok_or_else(|| ApiError::not_found(format!("unknown log source {source:?}")))?;
    let result = blocking(move || Ok(correlator.correlate_incident_flows(id, &source, window, &session.username)?)).await?;
    Ok(Json(result).into_response())
}

async fn reports(Authed(session): Authed, State(state): State<AppState>) -> ApiResult<Response> {
    state.require(&session, Capability::RunCannedReports)?;
    Ok(Json(CATALOG).into_response())
}

async fn report(
    State(state): State<AppState>,
    Authed(session): Authed,
    Path(name): Path<String>,
    Query(params): Params,
) -> ApiResult<Response> {
    let (name, tsv) = match name.strip_suffix(".tsv") {
        Some(n) => (n.to_string(), true),
        None => (name, false),
    };
    state.require(
        &session,
        if tsv {
            Capability::ExportTsv
        } else {
            Capability::RunCannedReports
        },
    )?;
    let out = run_report(&state.store, &name, &params, state.clock.now())?;
    if tsv {
        Ok(([(CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], export_tsv(&out.table)).into_response())
    } else {
        Ok(Json(out).into_response())
    }
}

#[derive(Deserialize)]
struct QueryBody {
    sql: String,
}

async fn custom_query(
    State(state): State<AppState>,
    Authed(session): Authed,
    b: Result<Json<QueryBody>, JsonRejection>,
) -> ApiResult<Response> {
    state.require(&session, Capability::RunCustomQuery)?;
    let sql = body(b)?.sql;
    audit(&state, &session.username, AuditAction::Search, "query".into(), sql.clone())?;
    let table = blocking(move || Ok(run_custom_query(&state.store, &sql, session.role)?)).await?;
    Ok(Json(table).into_response())
}

async fn sources(State(state): State<AppState>, Authed(session): Authed) -> ApiResult<Response> {
    state.require(&session, Capability::ViewSources)?;
    let list: Vec<_> = state
        .correlator
        .iter()
        .flat_map(|c| c.sources())
        .map(|s| {
            json!({
                "source_id": s.source_id,
                "display_name": s.display_name,
                "transport": s.transport,
                "cache_ttl": s.cache_ttl,
            })
        })
        .collect();
    Ok(Json(list).into_response())
}

async fn submit_alert(State(state): State<AppState>, Authed(session): Authed, raw: String) -> ApiResult<Response> {
    state.require(&session, Capability::TriggerIngest)?;
    let outcome = blocking(move || {
        let outcome = state.ingestor(&session.username).ingest_raw(&raw)?;
        if outcome.deduplicated {
            audit(
                &state,
                &session.username,
                AuditAction::Search,
                format!("email:{}", outcome.incident.email),
                "duplicate alert, nothing stored".into(),
            )?;
        }
        Ok(outcome)
    })
    .await?;
    let status = if outcome.deduplicated {
        StatusCode::OK
    } else {
        StatusCode::CREATED
    };
    let body = json!({
        "incident_id": outcome.incident.incident_id,
        "deduplicated": outcome.deduplicated,
        "new_host": outcome.new_host,
        "new_type": outcome.new_type,
    });
    Ok((status, Json(body)).into_response())
}

async fn users(State(state): State<AppState>, Authed(session): Authed) -> ApiResult<Response> {
    state.require(&session, Capability::ManageUsers)?;
    Ok(Json(list_accounts(&state.store)?).into_response())
}

#[derive(Deserialize)]
struct NewUser {
    username: String,
    password: String,
    role: String,
}

async fn add_user(
    State(state): State<AppState>,
    Authed(session): Authed,
    b: Result<Json<NewUser>, JsonRejection>,
) -> ApiResult<Response> {
    state.require(&session, Capability::ManageUsers)?;
    let new = body(b)?;
    let role = Role::parse(&new.role).ok_or_else(|| ApiError::invalid("role must be admin or normal"))?;
    let account = blocking(move || {
        let hasher = state.sessions.hasher();
        Ok(create_account(&state.store, &hasher, &session.username, &new.username, &new.password, role)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(account)).into_response())
}

async fn audit_log(State(state): State<AppState>, Authed(session): Authed, Query(params): Params) -> ApiResult<Response> {
    state.require(&session, Capability::ViewAudit)?;
    only_params(&params, &["offset", "limit"])?;
    let offset = usize_param(&params, "offset")?.unwrap_or(0);
    let limit = usize_param(&params, "limit")?;
    Ok(Json(state.store.audit_entries(offset, limit)?).into_response())
}

//! Free-form read-only SQL for administrators.
//!
//! Statements pass a lexical gate first: one statement, starting with
//! `SELECT` or `WITH`, containing none of the keywords that could modify
//! the database or its connection. They then run on a connection that
//! refuses writes, so the gate is not the only line of defence.

use rusqlite::types::Value as SqlValue;

use super::{Column, ColumnKind, QueryError, ReportTable, Value};
use crate::auth::Role;
use crate::store::{parse_ts, Store, StoreError};

const FORBIDDEN: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "DROP", "ALTER", "CREATE", "REPLACE", "UPSERT", "ATTACH", "DETACH", "PRAGMA",
    "VACUUM", "REINDEX", "ANALYZE", "BEGIN", "COMMIT", "ROLLBACK", "SAVEPOINT", "RELEASE", "TRUNCATE", "GRANT",
    "REVOKE", "LOAD_EXTENSION",
];

#[derive(Debug, PartialEq, Eq)]
enum Token {
    Word(String),
    Semicolon,
    Other,
}

fn tokenize(sql: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() => i += 1,
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                loop {
                    if i + 1 >= chars.len() {
                        return Err(QueryError::QueryRejected("unterminated comment".into()));
                    }
                    if chars[i] == '*' && chars[i + 1] == '/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            '\'' | '"' | '`' | '[' => {
                let close = if c == '[' { ']' } else { c };
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(QueryError::QueryRejected("unterminated quoted text".into())),
                        Some(&ch) if ch == close => {
                            if close != ']' && chars.get(i + 1) == Some(&close) {
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(_) => i += 1,
                    }
                }
                out.push(Token::Other);
            }
            ';' => {
                out.push(Token::Semicolon);
                i += 1;
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                    i += 1;
                }
                out.push(Token::Word(chars[start..i].iter().collect::<String>().to_ascii_uppercase()));
            }
            _ => {
                out.push(Token::Other);
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Lexical read-only gate. String literals, quoted identifiers and
/// comments are skipped, so `SELECT 'drop table'` passes.
pub fn check_read_only(sql: &str) -> Result<(), QueryError> {
    let mut tokens = tokenize(sql)?;
    while tokens.last() == Some(&Token::Semicolon) {
        tokens.pop();
    }
    if tokens.contains(&Token::Semicolon) {
        return Err(QueryError::QueryRejected("only a single statement is allowed".into()));
    }
    match tokens.first() {
        Some(Token::Word(w)) if w == "SELECT" || w == "WITH" => {}
        Some(_) => return Err(QueryError::QueryRejected("statement must start with SELECT or WITH".into())),
        None => return Err(QueryError::QueryRejected("empty statement".into())),
    }
    for t in &tokens {
        if let Token::Word(w) = t {
            if FORBIDDEN.contains(&w.as_str()) {
                return Err(QueryError::QueryRejected(format!("keyword {w} is not allowed")));
            }
        }
    }
    Ok(())
}

fn declared_kind(decl: &str) -> Option<ColumnKind> {
    let d = decl.to_ascii_uppercase();
    if d.contains("TIMESTAMP") || d.contains("DATETIME") {
        Some(ColumnKind::Timestamp)
    } else if d.contains("INT") {
        Some(ColumnKind::Integer)
    } else if d.contains("REAL") || d.contains("FLOA") || d.contains("DOUB") {
        Some(ColumnKind::Real)
    } else if d.is_empty() {
        None
    } else {
        Some(ColumnKind::Text)
    }
}

fn inferred_kind(v: &SqlValue) -> Option<ColumnKind> {
    match v {
        SqlValue::Null => None,
        SqlValue::Integer(_) => Some(ColumnKind::Integer),
        SqlValue::Real(_) => Some(ColumnKind::Real),
        SqlValue::Text(_) | SqlValue::Blob(_) => Some(ColumnKind::Text),
    }
}

fn as_text(v: &SqlValue) -> Value {
    match v {
        SqlValue::Null => Value::Null,
        SqlValue::Integer(i) => Value::Text(i.to_string()),
        SqlValue::Real(r) => Value::Text(r.to_string()),
        SqlValue::Text(t) => Value::Text(t.clone()),
        SqlValue::Blob(b) => Value::Text(b.iter().map(|x| format!("{x:02x}")).collect()),
    }
}

fn convert(v: &SqlValue, kind: ColumnKind) -> Option<Value> {
    match (v, kind) {
        (SqlValue::Null, _) => Some(Value::Null),
        (SqlValue::Integer(i), ColumnKind::Integer) => Some(Value::Integer(*i)),
        (SqlValue::Integer(i), ColumnKind::Real) => Some(Value::Real(*i as f64)),
        (SqlValue::Real(r), ColumnKind::Real) => Some(Value::Real(*r)),
        (SqlValue::Text(t), ColumnKind::Timestamp) => parse_ts(t).ok().map(Value::Timestamp),
        (_, ColumnKind::Text) => Some(as_text(v)),
        _ => None,
    }
}

struct RawResult {
    names: Vec<String>,
    decls: Vec<Option<String>>,
    rows: Vec<Vec<SqlValue>>,
}

/// Runs an administrator's read-only statement and types its columns from
/// the declared column types, falling back to the first non-null value.
pub fn run_custom_query(store: &Store, sql: &str, role: Role) -> Result<ReportTable, QueryError> {
    if role != Role::Admin {
        return Err(QueryError::Forbidden);
    }
    check_read_only(sql)?;
    let raw = store
        .read_only(|c| {
            let mut stmt = c.prepare(sql)?;
            if !stmt.readonly() {
                return Err(StoreError::Corrupt("statement is not read-only".into()));
            }
            let names = stmt.column_names().iter().map(|s| s.to_string()).collect::<Vec<_>>();
            let decls = stmt
                .columns()
                .iter()
                .map(|c| c.decl_type().map(str::to_string))
                .collect::<Vec<_>>();
            let n = names.len();
            let mut rows = Vec::new();
            let mut q = stmt.query([])?;
            while let Some(r) = q.next()? {
                rows.push((0..n).map(|i| r.get::<_, SqlValue>(i)).collect::<Result<Vec<_>, _>>()?);
            }
            Ok(RawResult { names, decls, rows })
        })
        .map_err(|e| match e {
            StoreError::Backend(b) => QueryError::QueryFailed(b.to_string()),
            StoreError::Corrupt(m) => QueryError::QueryRejected(m),
            other => QueryError::Store(other),
        })?;

    let mut kinds = Vec::with_capacity(raw.names.len());
    let mut columns: Vec<Vec<Value>> = Vec::with_capacity(raw.names.len());
    for (i, decl) in raw.decls.iter().enumerate() {
        let kind = decl
            .as_deref()
            .and_then(declared_kind)
            .or_else(|| raw.rows.iter().find_map(|r| inferred_kind(&r[i])))
            .unwrap_or(ColumnKind::Text);
        let converted: Option<Vec<Value>> = raw.rows.iter().map(|r| convert(&r[i], kind)).collect();
        match converted {
            Some(vals) => {
                kinds.push(kind);
                columns.push(vals);
            }
            None => {
                kinds.push(ColumnKind::Text);
                columns.push(raw.rows.iter().map(|r| as_text(&r[i])).collect());
            }
        }
    }

    let mut table = ReportTable::new(raw.names.iter().zip(&kinds).map(|(n, k)| Column::new(n, *k)).collect());
    for r in 0..raw.rows.len() {
        table.push(columns.iter_mut().map(|c| std::mem::replace(&mut c[r], Value::Null)).collect())?;
    }
    Ok(table)
}

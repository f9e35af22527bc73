use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use super::QueryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Text,
    Integer,
    Real,
    Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Text(String),
    Integer(i64),
    Real(f64),
    Timestamp(DateTime<Utc>),
}

impl Value {
    pub fn conforms_to(&self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (Value::Null, _)
                | (Value::Text(_), ColumnKind::Text)
                | (Value::Integer(_), ColumnKind::Integer)
                | (Value::Real(_), ColumnKind::Real)
                | (Value::Timestamp(_), ColumnKind::Timestamp)
        )
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Integer(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(r) => Some(*r),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Integer(i)
    }
}

impl From<f64> for Value {
    fn from(r: f64) -> Self {
        Value::Real(r)
    }
}

impl From<DateTime<Utc>> for Value {
    fn from(t: DateTime<Utc>) -> Self {
        Value::Timestamp(t)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Text(t) => s.serialize_str(t),
            Value::Integer(i) => s.serialize_i64(*i),
            Value::Real(r) => s.serialize_f64(*r),
            Value::Timestamp(t) => s.serialize_str(&format_timestamp(t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
}

impl ReportTable {
    pub fn new(columns: Vec<Column>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a row, rejecting wrong arity or values of the wrong kind.
    pub fn push(&mut self, row: Vec<Value>) -> Result<(), QueryError> {
        if row.len() != self.columns.len() {
            return Err(QueryError::Internal(format!(
                "row arity {} != column count {}",
                row.len(),
                self.columns.len()
            )));
        }
        if let Some((v, c)) = row.iter().zip(&self.columns).find(|(v, c)| !v.conforms_to(c.kind)) {
            return Err(QueryError::Internal(format!("value {v:?} does not fit column {} ({:?})", c.name, c.kind)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

impl Serialize for ReportTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Shape<'a> {
            columns: &'a [Column],
            rows: Rows<'a>,
        }
        struct Rows<'a>(&'a [Vec<Value>]);
        impl Serialize for Rows<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for r in self.0 {
                    seq.serialize_element(r)?;
                }
                seq.end()
            }
        }
        Shape {
            columns: &self.columns,
            rows: Rows(&self.rows),
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Bar,
    Line,
    Pie,
    Histogram,
}

impl ChartKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Bar => "bar",
            ChartKind::Line => "line",
            ChartKind::Pie => "pie",
            ChartKind::Histogram => "histogram",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartSeries {
    pub title: String,
    pub x_labels: Vec<String>,
    pub values: Vec<f64>,
    pub kind: ChartKind,
}

pub const PIE_TOLERANCE: f64 = 1e-6;

impl ChartSeries {
    pub fn new(title: &str, kind: ChartKind, x_labels: Vec<String>, values: Vec<f64>) -> Result<Self, QueryError> {
        if x_labels.len() != values.len() {
            return Err(QueryError::Internal(format!(
                "{} labels for {} values",
                x_labels.len(),
                values.len()
            )));
        }
        if kind == ChartKind::Pie && !values.is_empty() {
            let sum: f64 = values.iter().sum();
            if (sum - 100.0).abs() > PIE_TOLERANCE {
                return Err(QueryError::Internal(format!("pie segments sum to {sum}")));
            }
        }
        Ok(Self {
            title: title.to_string(),
            x_labels,
            values,
            kind,
        })
    }
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsSummary {
    pub mean: f64,
    pub stddev: f64,
    pub n: u64,
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn render_value(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Text(t) => tsv_field(t),
        Value::Integer(i) => i.to_string(),
        Value::Real(r) => r.to_string(),
        Value::Timestamp(t) => format_timestamp(t),
    }
}

/// Tab-separated export: a header line of column names, then one line per
/// row. Lines end in LF. Tabs, CR and LF inside fields become single
/// spaces; NULL is the empty string; reals use the shortest round-trip
/// decimal form; timestamps are `YYYY-MM-DDTHH:MM:SSZ`.
pub fn export_tsv(table: &ReportTable) -> String {
    let mut out = String::new();
    let header: Vec<String> = table.columns.iter().map(|c| tsv_field(&c.name)).collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for row in &table.rows {
        let fields: Vec<String> = row.iter().map(render_value).collect();
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

/// Plot spec text: `#<kind> <title>` followed by `label<TAB>value` lines.
pub fn render_plotspec(chart: &ChartSeries) -> String {
    let mut out = format!("#{} {}\n", chart.kind.as_str(), tsv_field(&chart.title));
    for (label, value) in chart.x_labels.iter().zip(&chart.values) {
        let _ = writeln!(out, "{}\t{}", tsv_field(label), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = ReportTable::new(vec![Column::new("colA", ColumnKind::Text), Column::new("colB", ColumnKind::Integer)]);
        assert_eq!(export_tsv(&t), "colA\tcolB\n");
    }

    #[test]
    fn one_row() {
        let mut t = ReportTable::new(vec![Column::new("name", ColumnKind::Text), Column::new("cnt", ColumnKind::Integer)]);
        t.push(vec!["a.b.c.d".into(), 3i64.into()]).unwrap();
        assert_eq!(export_tsv(&t), "name\tcnt\na.b.c.d\t3\n");
    }

    #[test]
    fn embedded_separators_become_spaces() {
        let mut t = ReportTable::new(vec![Column::new("c", ColumnKind::Text), Column::new("n", ColumnKind::Real)]);
        t.push(vec!["a\tb\nc\r".into(), Value::Null]).unwrap();
        assert_eq!(export_tsv(&t), "c\tn\na b c \t\n");
    }

    #[test]
    fn rows_are_checked() {
        let mut t = ReportTable::new(vec![Column::new("n", ColumnKind::Integer)]);
        assert!(t.push(vec![]).is_err());
        assert!(t.push(vec!["x".into()]).is_err());
        assert!(t.push(vec![Value::Null]).is_ok());
    }

    #[test]
    fn chart_invariants() {
        assert!(ChartSeries::new("t", ChartKind::Bar, vec!["a".into()], vec![]).is_err());
        assert!(ChartSeries::new("t", ChartKind::Pie, vec!["a".into(), "b".into()], vec![50.0, 49.0]).is_err());
        let c = ChartSeries::new("t", ChartKind::Pie, vec!["a".into(), "b".into()], vec![50.0, 50.0]).unwrap();
        assert_eq!(render_plotspec(&c), "#pie t\na\t50\nb\t50\n");
    }

    #[test]
    fn json_shape() {
        let mut t = ReportTable::new(vec![
            Column::new("date", ColumnKind::Timestamp),
            Column::new("ip", ColumnKind::Text),
        ]);
        t.push(vec![
            chrono::DateTime::parse_from_rfc3339("2004-03-01T02:05:00Z").unwrap().to_utc().into(),
            Value::Null,
        ])
        .unwrap();
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "columns": [{"name": "date", "kind": "timestamp"}, {"name": "ip", "kind": "text"}],
                "rows": [["2004-03-01T02:05:00Z", null]],
            })
        );
    }
}

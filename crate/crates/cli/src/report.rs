//! JSON report envelope and conversions of library types to JSON values.

use std::time::{SystemTime, UNIX_EPOCH};

use cross_impact::estimators::Warning;
use cross_impact::Error;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

pub const REPORT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub generated_at_unix: u64,
    pub command_line: Vec<String>,
}

impl Meta {
    pub fn now() -> Self {
        Meta {
            generated_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            command_line: std::env::args().collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub config: Value,
    pub results: Value,
    pub warnings: Vec<Warning>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    Value::from(
        m.row_iter()
            .map(|r| r.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

pub fn vector(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

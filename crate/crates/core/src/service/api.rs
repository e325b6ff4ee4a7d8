//! Request routing independent of any HTTP library: the server adapter
//! turns its requests into [`ApiRequest`] and writes back [`ApiResponse`].
//!
//! Reads take a shared lock and never touch the log. Writes (every POST
//! except what-if) take the exclusive lock and, when a token is
//! configured, need it as a bearer credential. Every response carries the
//! log sequence number current when it was produced.

use std::path::PathBuf;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use percent_encoding::percent_decode_str;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::engine::{write_outbox, Engine, EscalationOutcome};
use super::ServiceError;
use crate::estimator::AssessmentOverrides;
use crate::ingest::{parse_warning_record, warning_record_violations};
use crate::warehouse::{OlapQuery, MEASURE_COLUMNS};

pub const SEQUENCE_HEADER: &str = "X-Log-Sequence";
pub const SEQUENCE_FIELD: &str = "log_sequence";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: String,
    /// Raw path, percent-encoded segments allowed.
    pub path: String,
    /// Decoded query pairs in order; keys may repeat.
    pub query: Vec<(String, String)>,
    pub body: String,
    /// The bearer token, if the request carried one.
    pub bearer: Option<String>,
}

impl ApiRequest {
    pub fn get(path: &str) -> Self {
        ApiRequest {
            method: "GET".into(),
            path: path.into(),
            ..Default::default()
        }
    }

    pub fn post(path: &str, body: impl Into<String>) -> Self {
        ApiRequest {
            method: "POST".into(),
            path: path.into(),
            body: body.into(),
            ..Default::default()
        }
    }

    pub fn with_query(mut self, key: &str, value: &str) -> Self {
        self.query.push((key.into(), value.into()));
        self
    }

    pub fn with_bearer(mut self, token: &str) -> Self {
        self.bearer = Some(token.into());
        self
    }

    fn query_values(&self, key: &str) -> Vec<&str> {
        self.query
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
    pub seq: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproverBody {
    approver: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PledgeBody {
    source_region_code: String,
    medics_pledged: u64,
}

enum Route<'a> {
    Health,
    Warnings,
    Assessment(&'a str),
    WhatIf(&'a str),
    Escalation(&'a str),
    Sos1(&'a str),
    Pledges(&'a str),
    Sos2(&'a str),
    Resolve(&'a str),
    Olap,
    Historical,
    Regions,
}

impl Route<'_> {
    fn is_write(&self, method: &str) -> bool {
        method == "POST" && !matches!(self, Route::WhatIf(_))
    }

    fn allows(&self, method: &str) -> bool {
        match self {
            Route::Warnings => matches!(method, "GET" | "POST"),
            Route::WhatIf(_)
            | Route::Sos1(_)
            | Route::Pledges(_)
            | Route::Sos2(_)
            | Route::Resolve(_) => method == "POST",
            _ => method == "GET",
        }
    }
}

fn route(segments: &[String]) -> Option<Route<'_>> {
    let s: Vec<&str> = segments.iter().map(String::as_str).collect();
    Some(match s.as_slice() {
        ["healthz"] => Route::Health,
        ["warnings"] => Route::Warnings,
        ["assessments", id] => Route::Assessment(id),
        ["assessments", id, "whatif"] => Route::WhatIf(id),
        ["escalations", id] => Route::Escalation(id),
        ["escalations", id, "sos1"] => Route::Sos1(id),
        ["escalations", id, "pledges"] => Route::Pledges(id),
        ["escalations", id, "sos2"] => Route::Sos2(id),
        ["escalations", id, "resolve"] => Route::Resolve(id),
        ["olap", "query"] => Route::Olap,
        ["historical"] => Route::Historical,
        ["regions"] => Route::Regions,
        _ => return None,
    })
}

fn parse_body<T: DeserializeOwned>(body: &str) -> Result<T, ServiceError> {
    let text = if body.trim().is_empty() { "{}" } else { body };
    serde_json::from_str(text).map_err(|e| ServiceError::BadRequest(format!("request body: {e}")))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response bodies serialise")
}

pub fn error_body(err: &ServiceError) -> Value {
    let mut body = json!({ "error": err.kind(), "message": err.to_string() });
    if let ServiceError::Validation { violations, .. } = err {
        body["violations"] = to_value(violations);
    }
    body
}

pub struct Api {
    engine: RwLock<Engine>,
    token: Option<String>,
    outbox: Option<PathBuf>,
}

impl Api {
    pub fn new(engine: Engine, token: Option<String>, outbox: Option<PathBuf>) -> Self {
        Api {
            engine: RwLock::new(engine),
            token: token.filter(|t| !t.is_empty()),
            outbox,
        }
    }

    pub fn engine(&self) -> RwLockReadGuard<'_, Engine> {
        self.engine.read().unwrap_or_else(|p| p.into_inner())
    }

    fn engine_mut(&self) -> RwLockWriteGuard<'_, Engine> {
        self.engine.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` with exclusive access, for maintenance outside the request
    /// path such as scheduled warehouse refreshes.
    pub fn with_engine_mut<R>(&self, f: impl FnOnce(&mut Engine) -> R) -> R {
        f(&mut self.engine_mut())
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let segments: Vec<String> = req
            .path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let method = req.method.to_ascii_uppercase();
        let result = match route(&segments) {
            None => Err(ServiceError::NotFound(req.path.clone())),
            Some(r) if !r.allows(&method) => Err(ServiceError::MethodNotAllowed(format!(
                "{method} {}",
                req.path
            ))),
            Some(r) if r.is_write(&method) => self.authorize(req).and_then(|()| {
                let mut engine = self.engine_mut();
                self.write(&r, req, &mut engine)
                    .map(|(status, body)| (status, body, engine.seq()))
            }),
            Some(r) => {
                let engine = self.engine();
                Self::read(&r, req, &engine).map(|body| (200, body, engine.seq()))
            }
        };
        match result {
            Ok((status, mut body, seq)) => {
                if let Value::Object(map) = &mut body {
                    map.insert(SEQUENCE_FIELD.into(), seq.into());
                }
                ApiResponse { status, body, seq }
            }
            Err(err) => {
                let seq = self.engine().seq();
                let mut body = error_body(&err);
                body[SEQUENCE_FIELD] = seq.into();
                ApiResponse {
                    status: err.status(),
                    body,
                    seq,
                }
            }
        }
    }

    fn authorize(&self, req: &ApiRequest) -> Result<(), ServiceError> {
        match &self.token {
            Some(t) if req.bearer.as_deref() != Some(t.as_str()) => Err(ServiceError::Unauthorized),
            _ => Ok(()),
        }
    }

    fn read(route: &Route<'_>, req: &ApiRequest, engine: &Engine) -> Result<Value, ServiceError> {
        match route {
            Route::Health => Ok(json!({ "status": "ok", "state_hash": engine.state_hash() })),
            Route::Warnings => Ok(json!({ "warnings": to_value(&engine.warnings()) })),
            Route::Assessment(id) => Ok(to_value(engine.assessment(id)?)),
            Route::WhatIf(id) => {
                let overrides: AssessmentOverrides = parse_body(&req.body)?;
                Ok(to_value(&engine.whatif(id, &overrides)?))
            }
            Route::Escalation(id) => Ok(to_value(&engine.escalation(id)?)),
            Route::Olap => {
                let group_by = req.query_values("group_by").join(",");
                let query = OlapQuery::parse(
                    &group_by,
                    &req.query_values("filter"),
                    &req.query_values("op"),
                )?;
                let cube = engine.olap(&query)?;
                Ok(json!({
                    "axes": cube.axes.iter().map(ToString::to_string).collect::<Vec<_>>(),
                    "measures": MEASURE_COLUMNS,
                    "rows": cube.to_json_rows(),
                    "totals": to_value(&cube.totals()),
                    "table": cube.to_table(),
                }))
            }
            Route::Historical => Ok(json!({ "quakes": to_value(&engine.catalog()) })),
            Route::Regions => {
                let r = engine.reference();
                Ok(json!({
                    "provinces": to_value(&r.provinces),
                    "regencies": to_value(&r.regencies),
                    "sn": r.sn(),
                    "magnitude_bands": to_value(r.bands()),
                    "sos1_sla_minutes": r.config.sos1_sla_minutes,
                }))
            }
            _ => unreachable!("write routes are dispatched to write"),
        }
    }

    fn write(
        &self,
        route: &Route<'_>,
        req: &ApiRequest,
        engine: &mut Engine,
    ) -> Result<(u16, Value), ServiceError> {
        let outcome = match route {
            Route::Warnings => {
                let warning = parse_warning_record(&req.body).map_err(|message| {
                    let violations = warning_record_violations(&req.body);
                    if violations.is_empty() {
                        ServiceError::BadRequest(message)
                    } else {
                        ServiceError::Validation {
                            message,
                            violations,
                        }
                    }
                })?;
                let ingested = engine.ingest_warning(warning)?;
                return Ok((201, to_value(&ingested)));
            }
            Route::Sos1(id) => {
                engine.issue_sos1(id, &parse_body::<ApproverBody>(&req.body)?.approver)?
            }
            Route::Pledges(id) => {
                let p: PledgeBody = parse_body(&req.body)?;
                engine.record_pledge(id, &p.source_region_code, p.medics_pledged)?
            }
            Route::Sos2(id) => {
                engine.evaluate_sos2(id, &parse_body::<ApproverBody>(&req.body)?.approver)?
            }
            Route::Resolve(id) => {
                engine.resolve(id, &parse_body::<ApproverBody>(&req.body)?.approver)?
            }
            _ => unreachable!("read routes are dispatched to read"),
        };
        Ok((200, self.escalation_body(outcome)))
    }

    fn escalation_body(&self, outcome: EscalationOutcome) -> Value {
        let mut body = to_value(&outcome.view);
        if let Some(doc) = &outcome.issued {
            body["issued"] = to_value(doc);
            if let Some(dir) = &self.outbox {
                match write_outbox(dir, doc) {
                    Ok(path) => body["outbox_path"] = Value::from(path.display().to_string()),
                    Err(e) => body["outbox_error"] = Value::from(e.to_string()),
                }
            }
        }
        body
    }
}

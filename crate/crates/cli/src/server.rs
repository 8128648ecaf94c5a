//! HTTP front end for [`AnnotationStore`].
//!
//! | method | path                          | body / query                         |
//! |--------|-------------------------------|--------------------------------------|
//! | POST   | `/annotators`                 | `AnnotatorProfile`                   |
//! | GET    | `/tasks/{kind}/next`          | `?annotator=ID`                      |
//! | POST   | `/responses/{kind}`           | survey or re-annotation submission   |
//! | GET    | `/export/{kind}`              | line-delimited records               |
//! | GET    | `/export/{kind}/tallies`      | per-word tallies as JSON             |
//! | GET    | `/stats`                      |                                      |
//!
//! `kind` is `survey` or `reannotation`. Errors are JSON objects with
//! `error` and `message` fields.

use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use lexborrow_core::annotator::{
    read_jsonl, read_survey_items, AnnotationStore, AnnotatorError, AnnotatorProfile, FinalTag, Registration,
    TaskKind,
};
use lexborrow_core::eval::Choice;

use crate::error::{in_module, CliError, CliResult};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "invalid", message: message.into() }
    }
}

impl From<AnnotatorError> for ApiError {
    fn from(e: AnnotatorError) -> Self {
        let (status, code) = match &e {
            AnnotatorError::UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "unknown_annotator"),
            AnnotatorError::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found"),
            AnnotatorError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            AnnotatorError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            AnnotatorError::CorruptLog { .. } | AnnotatorError::Io(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage")
            }
        };
        ApiError { status, code, message: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.code, message: &self.message };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn kind(raw: &str) -> ApiResult<TaskKind> {
    raw.parse::<TaskKind>().map_err(|_| ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: format!("unknown task kind {raw:?}"),
    })
}

/// Store calls fsync, so they run off the async worker threads.
async fn blocking<T: Send + 'static>(
    store: &Arc<AnnotationStore>,
    f: impl FnOnce(&AnnotationStore) -> Result<T, AnnotatorError> + Send + 'static,
) -> ApiResult<T> {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store)).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })?
    .map_err(ApiError::from)
}

#[derive(Serialize)]
struct Registered {
    annotator_id: String,
    created: bool,
}

async fn register(
    State(store): State<Arc<AnnotationStore>>,
    body: Result<Json<AnnotatorProfile>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(profile) = body?;
    let id = profile.annotator_id.clone();
    let outcome = blocking(&store, move |s| s.register(profile)).await?;
    let created = outcome == Registration::Created;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(Registered { annotator_id: id, created })).into_response())
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next_task(
    State(store): State<Arc<AnnotationStore>>,
    UrlPath(raw_kind): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> ApiResult<Response> {
    let kind = kind(&raw_kind)?;
    let annotator = q.annotator.filter(|a| !a.is_empty()).ok_or_else(|| ApiError::bad_request("missing ?annotator="))?;
    let next = blocking(&store, move |s| s.next_task(&annotator, kind)).await?;
    Ok(Json(next).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SurveySubmission {
    annotator_id: String,
    item_id: String,
    choice: Choice,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReannotationSubmission {
    annotator_id: String,
    task_id: String,
    final_tag: FinalTag,
}

async fn submit(
    State(store): State<Arc<AnnotationStore>>,
    UrlPath(raw_kind): UrlPath<String>,
    body: Result<Json<serde_json::Value>, JsonRejection>,
) -> ApiResult<Response> {
    let kind = kind(&raw_kind)?;
    let Json(value) = body?;
    let stored = match kind {
        TaskKind::Survey => {
            let s: SurveySubmission =
                serde_json::from_value(value).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let r = blocking(&store, move |st| st.submit_survey(&s.annotator_id, &s.item_id, s.choice)).await?;
            serde_json::to_value(r)
        }
        TaskKind::Reannotation => {
            let s: ReannotationSubmission =
                serde_json::from_value(value).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let r = blocking(&store, move |st| st.submit_reannotation(&s.annotator_id, &s.task_id, s.final_tag)).await?;
            serde_json::to_value(r)
        }
    };
    let stored = stored.map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn export(State(store): State<Arc<AnnotationStore>>, UrlPath(raw_kind): UrlPath<String>) -> ApiResult<Response> {
    let kind = kind(&raw_kind)?;
    let export = blocking(&store, move |s| Ok(s.export(kind))).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], export.lines).into_response())
}

async fn tallies(State(store): State<Arc<AnnotationStore>>, UrlPath(raw_kind): UrlPath<String>) -> ApiResult<Response> {
    let kind = kind(&raw_kind)?;
    let export = blocking(&store, move |s| Ok(s.export(kind))).await?;
    Ok(Json(export.tallies).into_response())
}

async fn stats(State(store): State<Arc<AnnotationStore>>) -> ApiResult<Response> {
    Ok(Json(blocking(&store, |s| Ok(s.stats())).await?).into_response())
}

pub fn router(store: Arc<AnnotationStore>) -> Router {
    Router::new()
        .route("/annotators", post(register))
        .route("/tasks/{kind}/next", get(next_task))
        .route("/responses/{kind}", post(submit))
        .route("/export/{kind}", get(export))
        .route("/export/{kind}/tallies", get(tallies))
        .route("/stats", get(stats))
        .with_state(store)
}

pub fn open_store(items: &Path, tasks: Option<&Path>, log: &Path) -> CliResult<AnnotationStore> {
    let open = |p: &Path| {
        std::fs::File::open(p)
            .map(std::io::BufReader::new)
            .map_err(|e| CliError::Usage(format!("missing input file {}: {e}", p.display())))
    };
    let items = read_survey_items(open(items)?).map_err(in_module("annotator"))?;
    let tasks = match tasks {
        Some(p) => read_jsonl(open(p)?).map_err(in_module("annotator"))?,
        None => Vec::new(),
    };
    AnnotationStore::open(log, items, tasks).map_err(in_module("annotator"))
}

pub fn serve_blocking(items: &Path, tasks: Option<&Path>, log: &Path, addr: &str) -> CliResult<()> {
    let store = Arc::new(open_store(items, tasks, log)?);
    let runtime = tokio::runtime::Runtime::new().map_err(in_module("serve"))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(in_module("serve"))?;
        let local = listener.local_addr().map_err(in_module("serve"))?;
        let s = store.stats();
        eprintln!(
            "serve: listening on http://{local} ({} items, {} tasks, {} responses replayed)",
            s.survey_items,
            s.reannotation_tasks,
            s.survey_responses + s.reannotation_responses
        );
        axum::serve(listener, router(store))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(in_module("serve"))
    })
}

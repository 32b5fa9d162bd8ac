//! HTTP routes over a shared market.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lwdock_core::market::Market;
use lwdock_core::storage::IndexFilter;
use lwdock_core::{Error, Status};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::Notify;

use crate::wire::{ErrorBody, Health, LearnwareDetail, SearchRequest, Submitted};

/// Header carrying the admin token on admin routes.
pub const ADMIN_HEADER: &str = "x-admin-token";

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 64 << 20;

#[derive(Clone)]
pub struct AppState {
    pub market: Arc<Market>,
    pub admin_token: Option<Arc<str>>,
    /// Signalled after each submission so the worker wakes early.
    pub wake: Arc<Notify>,
}

#[derive(Debug)]
pub enum ApiError {
    Core(Error),
    Unauthorized,
    BadRequest(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::State(_) => StatusCode::CONFLICT,
        Error::PackageFormat(_)
        | Error::Schema { .. }
        | Error::Integrity(_)
        | Error::Parameter(_)
        | Error::Dimension(_)
        | Error::InvalidData(_)
        | Error::Unsupported(_) => StatusCode::BAD_REQUEST,
        Error::ModelRuntime(_) | Error::ModelOutput(_) | Error::Storage(_) | Error::Io(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Core(e) => (
                status_of(&e),
                ErrorBody {
                    code: e.code().into(),
                    message: e.to_string(),
                },
            ),
            ApiError::Unauthorized => (
                StatusCode::UNAUTHORIZED,
                ErrorBody {
                    code: "Unauthorized".into(),
                    message: "missing or wrong admin token".into(),
                },
            ),
            ApiError::BadRequest(m) => (
                StatusCode::BAD_REQUEST,
                ErrorBody {
                    code: "BadRequest".into(),
                    message: m,
                },
            ),
        };
        if status.is_server_error() {
            tracing::error!(code = %body.code, "{}", body.message);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> lwdock_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Core(Error::Storage(format!("handler task failed: {e}"))))?
        .map_err(ApiError::Core)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/learnware", post(submit))
        .route("/api/learnware/{id}", get(detail).delete(remove))
        .route("/api/learnware/{id}/package", get(package))
        .route("/api/learnwares", get(list))
        .route("/api/search", post(search))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Every failure to read a submitted archive is reported as a malformed package.
async fn submit(
    State(st): State<AppState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Submitted>)> {
    let market = st.market.clone();
    let record = blocking(move || {
        market.insert_bytes(&body).map_err(|e| match e {
            e @ (Error::Schema { .. } | Error::Integrity(_)) => Error::PackageFormat(e.to_string()),
            e => e,
        })
    })
    .await?;
    st.wake.notify_one();
    tracing::info!(id = %record.id, "submitted");
    Ok((
        StatusCode::CREATED,
        Json(Submitted {
            id: record.id,
            status: record.status,
        }),
    ))
}

async fn detail(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<LearnwareDetail>> {
    let entry = st.market.get(&id)?;
    Ok(Json(LearnwareDetail::new(entry.record, &entry.learnware)))
}

async fn package(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = st.market.get(&id)?;
    if entry.record.status != Status::Verified {
        return Err(Error::State(format!(
            "learnware {id} is {}",
            entry.record.status.as_str()
        ))
        .into());
    }
    let market = st.market.clone();
    let bytes = blocking(move || market.package_bytes(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/zip")], bytes).into_response())
}

/// Query strings may carry empty values (`?status=&task_type=`), which mean
/// "no constraint".
#[derive(Debug, Default, Deserialize)]
struct ListQuery {
    status: Option<String>,
    task_type: Option<String>,
    data_type: Option<String>,
    scenario: Option<String>,
}

fn facet<T: DeserializeOwned>(name: &str, value: Option<String>) -> ApiResult<Option<T>> {
    match value.filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => serde_json::from_value(serde_json::Value::String(v.clone()))
            .map(Some)
            .map_err(|_| ApiError::BadRequest(format!("unknown {name} {v:?}"))),
    }
}

async fn list(
    State(st): State<AppState>,
    Query(q): Query<ListQuery>,
) -> ApiResult<Json<Vec<lwdock_core::storage::IndexRecord>>> {
    let filter = IndexFilter {
        status: facet("status", q.status)?,
        task_type: facet("task_type", q.task_type)?,
        data_type: facet("data_type", q.data_type)?,
        scenario: q.scenario.filter(|s| !s.is_empty()),
    };
    Ok(Json(st.market.list(&filter)))
}

async fn search(
    State(st): State<AppState>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> ApiResult<Json<lwdock_core::market::SearchResult>> {
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let market = st.market.clone();
    let result = blocking(move || {
        let (user, opts) = req.into_query()?;
        market.search(&user, &opts)
    })
    .await?;
    Ok(Json(result))
}

async fn remove(
    State(st): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    let given = headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok());
    match (&st.admin_token, given) {
        (Some(want), Some(got)) if want.as_ref() == got => {}
        _ => return Err(ApiError::Unauthorized),
    }
    let market = st.market.clone();
    blocking(move || market.delete(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn health(State(st): State<AppState>) -> ApiResult<Json<Health>> {
    let market = st.market.clone();
    let (queue_depth, verified_count) = blocking(move || {
        Ok((
            market.index().count(Status::Waiting)?,
            market.index().count(Status::Verified)?,
        ))
    })
    .await?;
    Ok(Json(Health {
        queue_depth,
        verified_count,
    }))
}

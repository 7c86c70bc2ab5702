//! JSON over HTTP.
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/v1/sessions` `{subject_id}` | 201 `{session_id, model_version}` |
//! | POST | `/v1/sessions/{id}/ibi` `{samples: [{t_ms, ibi_ms}]}` | 200 ack |
//! | GET | `/v1/sessions/{id}/comfort` | 200 prediction, 409 while warming up |
//! | POST | `/v1/sessions/{id}/feedback` `{comfort, temp_adjust?}` | 200 |
//! | GET | `/v1/sessions/{id}/actuation?target=8.0` | 200 plan |
//! | GET | `/v1/subjects/{id}/models` | 200 `[ModelRecord]` |
//! | POST | `/v1/subjects/{id}/recalibrate` | 202 `{job_id}` |
//! | GET | `/v1/jobs/{id}` | 200 job |
//!
//! Errors carry `{"error": message}`; unknown ids map to 404, state
//! conflicts to 409 and malformed input to 400.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use comfort_core::IbiSample;
use serde::Deserialize;
use serde_json::json;

use crate::service::{Service, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::SessionNotFound(_) | ServiceError::JobNotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::InsufficientData { .. } | ServiceError::NoFeedback(_) | ServiceError::JobInFlight { .. } => {
                StatusCode::CONFLICT
            }
            ServiceError::Rejected(_) | ServiceError::InvalidInput(_) | ServiceError::Plan(_) => StatusCode::BAD_REQUEST,
            ServiceError::Store(_) | ServiceError::Model(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error": self.to_string() });
        match &self {
            ServiceError::InsufficientData { seconds_remaining } => {
                body["seconds_remaining"] = json!(seconds_remaining);
            }
            ServiceError::JobInFlight { job_id } => body["job_id"] = json!(job_id),
            _ => {}
        }
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(body)).into_response()
    }
}

type Svc = State<Arc<Service>>;
type Body<T> = Result<Json<T>, JsonRejection>;

fn body<T>(b: Body<T>) -> Result<T, ServiceError> {
    b.map(|Json(v)| v).map_err(|e| ServiceError::InvalidInput(e.body_text()))
}

#[derive(Deserialize)]
struct CreateSession {
    subject_id: String,
}

#[derive(Deserialize)]
struct IbiBatch {
    samples: Vec<IbiSample>,
}

#[derive(Deserialize)]
struct Feedback {
    comfort: f64,
    #[serde(default)]
    temp_adjust: Option<i32>,
}

#[derive(Deserialize)]
struct Target {
    target: f64,
}

async fn create_session(State(svc): Svc, req: Body<CreateSession>) -> Result<Response, ServiceError> {
    let req = body(req)?;
    let (session_id, model_version) = svc.create_session(&req.subject_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session_id, "model_version": model_version })),
    )
        .into_response())
}

async fn ingest(State(svc): Svc, Path(id): Path<String>, req: Body<IbiBatch>) -> Result<Response, ServiceError> {
    let req = body(req)?;
    Ok(Json(svc.ingest(&id, &req.samples)?).into_response())
}

async fn comfort(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.predict(&id)?).into_response())
}

async fn feedback(State(svc): Svc, Path(id): Path<String>, req: Body<Feedback>) -> Result<Response, ServiceError> {
    let req = body(req)?;
    Ok(Json(svc.submit_feedback(&id, req.comfort, req.temp_adjust)?).into_response())
}

async fn actuation(State(svc): Svc, Path(id): Path<String>, q: Result<Query<Target>, QueryRejection>) -> Result<Response, ServiceError> {
    let Query(q) = q.map_err(|e| ServiceError::InvalidInput(e.body_text()))?;
    Ok(Json(svc.plan(&id, q.target)?).into_response())
}

async fn models(State(svc): Svc, Path(subject): Path<String>) -> Response {
    Json(svc.models(&subject)).into_response()
}

async fn recalibrate(State(svc): Svc, Path(subject): Path<String>) -> Result<Response, ServiceError> {
    let job_id = svc.recalibrate(&subject)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))).into_response())
}

async fn job(State(svc): Svc, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(svc.job(&id)?).into_response())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/ibi", post(ingest))
        .route("/v1/sessions/{id}/comfort", get(comfort))
        .route("/v1/sessions/{id}/feedback", post(feedback))
        .route("/v1/sessions/{id}/actuation", get(actuation))
        .route("/v1/subjects/{id}/models", get(models))
        .route("/v1/subjects/{id}/recalibrate", post(recalibrate))
        .route("/v1/jobs/{id}", get(job))
        .with_state(service)
}

/// Serve until Ctrl-C.
pub async fn serve(service: Arc<Service>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

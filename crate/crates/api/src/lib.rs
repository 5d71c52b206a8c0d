//! `/v1` HTTP facade over the story engine.

pub mod error;
pub mod jobs;
pub mod service;
pub mod view;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use storyweave_core::ComponentRef;

pub use error::{ApiError, ErrorCode};
pub use jobs::{Job, JobStatus, Jobs};
pub use service::{Idea, Service, StartOver};
use view::Annotator;

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Service>,
    pub jobs: Arc<Jobs>,
}

impl AppState {
    pub fn new(service: Service) -> Self {
        Self {
            service: Arc::new(service),
            jobs: Arc::new(Jobs::default()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Run blocking engine work off the async runtime.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        tracing::error!("worker panicked: {e}");
        Err(ApiError::new(ErrorCode::Internal, "request worker failed"))
    })
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/ideas", get(ideas))
        .route("/v1/session", get(session))
        .route("/v1/projects", get(list_projects).post(create_project))
        .route("/v1/jobs/{job}", get(get_job))
        .route("/v1/projects/{id}", get(get_project))
        .route("/v1/projects/{id}/storyboard", get(get_storyboard))
        .route("/v1/projects/{id}/revisions", get(get_revisions))
        .route("/v1/projects/{id}/components/{component}", get(get_component))
        .route("/v1/projects/{id}/components/{component}/revise", post(revise))
        .route("/v1/projects/{id}/scenes/{index}/regenerate", post(regenerate_scene))
        .route("/v1/projects/{id}/regenerate-stale", post(regenerate_stale))
        .route("/v1/projects/{id}/undo", post(undo))
        .route("/v1/projects/{id}/start-over", post(start_over))
        .route("/v1/projects/{id}/export", get(export))
        .route("/v1/projects/{id}/assets/{handle}", get(asset))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such route") })
        .method_not_allowed_fallback(|| async { ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed") })
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn ideas(State(st): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    let svc = st.service.clone();
    let ideas = blocking(move || svc.ideas()).await?;
    Ok(Json(json!({ "ideas": ideas })))
}

async fn session(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!(st.service.session()))
}

async fn list_projects(State(st): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    let svc = st.service.clone();
    blocking(move || {
        let ids = svc.list()?;
        let items: Vec<_> = ids
            .into_iter()
            .map(|id| {
                let archived = svc.archived(&id).is_some();
                json!({ "id": id, "archived": archived })
            })
            .collect();
        Ok(Json(json!({ "projects": items })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    seed: Option<String>,
    suggestion_id: Option<String>,
    /// Run the pipeline inside the request instead of as a job.
    #[serde(default)]
    wait: bool,
}

async fn create_project(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let body: CreateBody = parse_body(&body)?;
    let seed = st.service.seed(body.seed.as_deref(), body.suggestion_id.as_deref())?;
    if body.wait {
        let svc = st.service.clone();
        let project = blocking(move || svc.create(seed)).await?;
        let a = Annotator::new(&project);
        let out = json!({
            "project_id": project.id,
            "project": a.project(false),
            "storyboard": a.storyboard(),
        });
        return Ok((StatusCode::CREATED, Json(out)).into_response());
    }
    let job = st.jobs.start();
    let (jobs, svc, job_id) = (st.jobs.clone(), st.service.clone(), job.id.clone());
    tokio::spawn(async move {
        jobs.update(&job_id, |j| j.status = JobStatus::Running);
        let result = blocking(move || svc.create(seed)).await;
        jobs.update(&job_id, |j| match result {
            Ok(p) => {
                j.status = JobStatus::Succeeded;
                j.project_id = Some(p.id);
            }
            Err(e) => {
                j.status = JobStatus::Failed;
                j.error = Some(e);
            }
        });
    });
    let location = format!("/v1/jobs/{}", job.id);
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location)],
        Json(json!({ "job": job })),
    )
        .into_response())
}

async fn get_job(State(st): State<AppState>, Path(job): Path<String>) -> ApiResult<Json<Job>> {
    st.jobs
        .get(&job)
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::JobNotFound, format!("no job `{job}`")))
}

async fn get_project(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<view::ProjectView>> {
    let svc = st.service.clone();
    blocking(move || {
        let p = svc.load(&id)?;
        Ok(Json(Annotator::new(&p).project(svc.archived(&id).is_some())))
    })
    .await
}

async fn get_storyboard(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<view::StoryboardView>> {
    let svc = st.service.clone();
    blocking(move || Ok(Json(Annotator::new(&svc.load(&id)?).storyboard()))).await
}

async fn get_revisions(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let svc = st.service.clone();
    blocking(move || Ok(Json(json!({ "revisions": svc.load(&id)?.revisions })))).await
}

async fn get_component(
    State(st): State<AppState>,
    Path((id, component)): Path<(String, String)>,
) -> ApiResult<Json<view::ComponentView>> {
    let target: ComponentRef = component.parse()?;
    let svc = st.service.clone();
    blocking(move || {
        let p = svc.load(&id)?;
        Ok(Json(Annotator::new(&p).component(&target)?))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviseBody {
    #[serde(default)]
    instruction: String,
}

async fn revise(
    State(st): State<AppState>,
    Path((id, component)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<view::MutationView>> {
    let body: ReviseBody = parse_body(&body)?;
    let svc = st.service.clone();
    blocking(move || {
        let applied = svc.revise(&id, &component, &body.instruction)?;
        Ok(Json(Annotator::new(&applied.project).mutation(Some(&applied.revision))))
    })
    .await
}

async fn regenerate_scene(
    State(st): State<AppState>,
    Path((id, index)): Path<(String, String)>,
) -> ApiResult<Json<view::MutationView>> {
    let svc = st.service.clone();
    blocking(move || {
        let applied = svc.regenerate_scene(&id, &index)?;
        Ok(Json(Annotator::new(&applied.project).mutation(Some(&applied.revision))))
    })
    .await
}

async fn regenerate_stale(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<view::MutationView>> {
    let svc = st.service.clone();
    blocking(move || {
        let (project, applied) = svc.regenerate_stale(&id)?;
        let revision = applied.as_ref().map(|a| &a.revision);
        Ok(Json(Annotator::new(&project).mutation(revision)))
    })
    .await
}

async fn undo(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<view::MutationView>> {
    let svc = st.service.clone();
    blocking(move || {
        let applied = svc.undo(&id)?;
        Ok(Json(Annotator::new(&applied.project).mutation(Some(&applied.revision))))
    })
    .await
}

async fn start_over(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StartOver>> {
    let svc = st.service.clone();
    blocking(move || svc.start_over(&id).map(Json)).await
}

async fn export(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let format = q.get("format").cloned().unwrap_or_else(|| "markdown".into());
    let svc = st.service.clone();
    let (media, body) = blocking(move || svc.export(&id, &format, "assets/")).await?;
    Ok(([(header::CONTENT_TYPE, media)], body).into_response())
}

async fn asset(State(st): State<AppState>, Path((id, handle)): Path<(String, String)>) -> ApiResult<Response> {
    let svc = st.service.clone();
    let (bytes, media) = blocking(move || svc.asset(&id, &handle)).await?;
    Ok(([(header::CONTENT_TYPE, media)], bytes).into_response())
}

//! JSON API over a [`Session`], plus the image files under `/images/`.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use interest_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::session::{Session, StoryboardMethod};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::Precondition(_) => StatusCode::CONFLICT,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Transport(_) | ServiceError::Core(CoreError::Extractor { .. }) => {
                StatusCode::BAD_GATEWAY
            }
            ServiceError::Core(CoreError::InvalidArgument(_)) => StatusCode::BAD_REQUEST,
            ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (
            status,
            Json(serde_json::json!({ "error": self.to_string() })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

async fn blocking<T, F>(session: &Arc<Session>, work: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Session) -> Result<T, ServiceError> + Send + 'static,
{
    let session = Arc::clone(session);
    tokio::task::spawn_blocking(move || work(&session))
        .await
        .map_err(|e| {
            ServiceError::Core(CoreError::InvalidArgument(format!("worker failed: {e}")))
        })?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub path: String,
    pub url: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairResponse {
    pub a: ImageRef,
    pub b: ImageRef,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgmentRequest {
    pub winner: String,
    pub loser: String,
    #[serde(default)]
    pub session: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SkipRequest {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub session: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Deserialize)]
pub struct StoryboardQuery {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub method: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct SaliencyQuery {
    pub window: Option<u32>,
    pub stride: Option<u32>,
}

fn image_ref(session: &Session, id: String) -> ImageRef {
    let path = session
        .store()
        .get(&id)
        .map(|r| r.image_path.clone())
        .unwrap_or_default();
    let url = format!("/images/{}", path.trim_start_matches('/'));
    ImageRef { id, path, url }
}

async fn pair(State(session): State<Arc<Session>>) -> ApiResult<PairResponse> {
    let (a, b) = session.sample_pair()?;
    Ok(Json(PairResponse {
        a: image_ref(&session, a),
        b: image_ref(&session, b),
    }))
}

async fn comparison(
    State(session): State<Arc<Session>>,
    Json(req): Json<JudgmentRequest>,
) -> ApiResult<crate::session::Ack> {
    let ack = blocking(&session, move |s| {
        s.record_comparison(&req.winner, &req.loser, &req.session)
    })
    .await?;
    if session.auto_recompute_due(ack.log_len) {
        session.spawn_recompute();
    }
    Ok(Json(ack))
}

async fn skip(
    State(session): State<Arc<Session>>,
    Json(req): Json<SkipRequest>,
) -> ApiResult<serde_json::Value> {
    let skips = blocking(&session, move |s| {
        s.record_skip(&req.a, &req.b, &req.session)
    })
    .await?;
    Ok(Json(serde_json::json!({ "skips": skips })))
}

async fn recompute(State(session): State<Arc<Session>>) -> ApiResult<crate::session::StatusReport> {
    blocking(&session, |s| s.recompute().map(|_| ())).await?;
    Ok(Json(session.status()))
}

async fn scores(State(session): State<Arc<Session>>) -> ApiResult<Vec<ScoreRow>> {
    let rows = session
        .snapshot()
        .map(|snap| {
            let p = &snap.scores;
            (0..p.len())
                .map(|k| ScoreRow {
                    id: p.ids[k].clone(),
                    mean: p.means[k],
                    variance: p.variances[k],
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(Json(rows))
}

async fn storyboard(
    State(session): State<Arc<Session>>,
    Query(q): Query<StoryboardQuery>,
) -> ApiResult<Vec<interest_core::storyboard::ManifestEntry>> {
    let method: StoryboardMethod = q.method.as_deref().unwrap_or("interest").parse()?;
    let (n, d) = (q.n.unwrap_or(24), q.d.unwrap_or(50));
    Ok(Json(
        blocking(&session, move |s| s.storyboard(n, d, method)).await?,
    ))
}

async fn saliency(
    State(session): State<Arc<Session>>,
    Path(id): Path<String>,
    Query(q): Query<SaliencyQuery>,
) -> ApiResult<interest_core::SaliencyMap> {
    Ok(Json(
        blocking(&session, move |s| s.saliency(&id, q.window, q.stride)).await?,
    ))
}

async fn status(State(session): State<Arc<Session>>) -> ApiResult<crate::session::StatusReport> {
    Ok(Json(session.status()))
}

pub fn router(session: Arc<Session>) -> Router {
    let images = ServeDir::new(session.store().base_dir());
    Router::new()
        .route("/api/pair", get(pair))
        .route("/api/comparison", post(comparison))
        .route("/api/skip", post(skip))
        .route("/api/recompute", post(recompute))
        .route("/api/scores", get(scores))
        .route("/api/storyboard", get(storyboard))
        .route("/api/saliency/{id}", get(saliency))
        .route("/api/status", get(status))
        .nest_service("/images", images)
        .with_state(session)
}

//! The `/extract` protocol and two extractors that speak it.
//!
//! Request: `POST /extract` with `{"id": ..., "image_bytes": <base64>}` or
//! `{"id": ..., "image_path": ...}`. Response: `{"id": ..., "features": [...]}`.
//! Errors come back as `{"error": ...}` with a 4xx or 5xx status.

use std::io::Cursor;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use interest_core::{Extractor, FeatureStore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_bytes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub id: String,
    pub features: Vec<f64>,
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, String> {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(buf.into_inner())
}

/// Client for a remote `/extract` endpoint.
pub struct HttpExtractor {
    endpoint: String,
    agent: ureq::Agent,
    sequence: AtomicU64,
}

impl HttpExtractor {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpExtractor {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent,
            sequence: AtomicU64::new(0),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn request(&self, request: &ExtractRequest) -> Result<ExtractResponse, String> {
        let url = format!("{}/extract", self.endpoint);
        let mut response = self
            .agent
            .post(&url)
            .send_json(request)
            .map_err(|e| format!("POST {url}: {e}"))?;
        let body: ExtractResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| format!("bad response from {url}: {e}"))?;
        if body.id != request.id {
            return Err(format!(
                "response id {:?} does not match request {:?}",
                body.id, request.id
            ));
        }
        Ok(body)
    }
}

impl Extractor for HttpExtractor {
    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>, String> {
        let id = format!("req-{}", self.sequence.fetch_add(1, Ordering::Relaxed));
        let request = ExtractRequest {
            id,
            image_bytes: Some(STANDARD.encode(encode_png(image)?)),
            image_path: None,
        };
        Ok(self.request(&request)?.features)
    }
}

/// Cheap deterministic stand-in for a CNN: mean color of each cell of a
/// `grid x grid` partition, centered on mid-gray, plus a constant bias term
/// that keeps the vector away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGridExtractor {
    pub grid: u32,
}

impl Default for PixelGridExtractor {
    fn default() -> Self {
        PixelGridExtractor { grid: 4 }
    }
}

impl PixelGridExtractor {
    pub fn dim(&self) -> usize {
        (self.grid * self.grid * 3 + 1) as usize
    }
}

impl Extractor for PixelGridExtractor {
    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>, String> {
        let (w, h) = image.dimensions();
        if w < self.grid || h < self.grid {
            return Err(format!(
                "{w}x{h} image is smaller than the {} grid",
                self.grid
            ));
        }
        let g = self.grid as usize;
        let mut sums = vec![0.0f64; g * g * 3];
        let mut counts = vec![0usize; g * g];
        for (x, y, p) in image.enumerate_pixels() {
            let cell = (y * self.grid / h) as usize * g + (x * self.grid / w) as usize;
            counts[cell] += 1;
            for (c, v) in p.0.iter().enumerate() {
                sums[cell * 3 + c] += *v as f64;
            }
        }
        let mut features: Vec<f64> = sums
            .iter()
            .enumerate()
            .map(|(k, s)| s / counts[k / 3] as f64 / 255.0 - 0.5)
            .collect();
        features.push(0.05);
        Ok(features)
    }
}

/// Backing for the stub `/extract` server: stored vectors for id or path
/// lookups, computed ones for raw image bytes.
pub struct StubBackend {
    pub stored: Option<FeatureStore>,
    pub extractor: Arc<dyn Extractor + Send>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

type Reply = Result<Json<ExtractResponse>, (StatusCode, Json<ErrorBody>)>;

fn reject(status: StatusCode, error: impl Into<String>) -> (StatusCode, Json<ErrorBody>) {
    (
        status,
        Json(ErrorBody {
            error: error.into(),
        }),
    )
}

async fn handle_extract(
    State(backend): State<Arc<StubBackend>>,
    Json(req): Json<ExtractRequest>,
) -> Reply {
    match (&req.image_bytes, &req.image_path) {
        (Some(encoded), None) => {
            let bytes = STANDARD
                .decode(encoded)
                .map_err(|e| reject(StatusCode::BAD_REQUEST, format!("bad base64: {e}")))?;
            let image = image::load_from_memory(&bytes)
                .map_err(|e| reject(StatusCode::BAD_REQUEST, format!("undecodable image: {e}")))?
                .to_rgb8();
            let backend = backend.clone();
            let features = tokio::task::spawn_blocking(move || backend.extractor.extract(&image))
                .await
                .map_err(|e| reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
                .map_err(|e| reject(StatusCode::INTERNAL_SERVER_ERROR, e))?;
            Ok(Json(ExtractResponse {
                id: req.id,
                features,
            }))
        }
        (None, Some(_)) | (None, None) => {
            let store = backend.stored.as_ref().ok_or_else(|| {
                reject(
                    StatusCode::BAD_REQUEST,
                    "this extractor only accepts image_bytes",
                )
            })?;
            let record = store
                .get(&req.id)
                .or_else(|| {
                    let path = req.image_path.as_deref()?;
                    store.records().iter().find(|r| r.image_path == path)
                })
                .ok_or_else(|| {
                    reject(
                        StatusCode::NOT_FOUND,
                        format!("no stored vector for {:?}", req.id),
                    )
                })?;
            Ok(Json(ExtractResponse {
                id: req.id,
                features: record.features.clone(),
            }))
        }
        (Some(_), Some(_)) => Err(reject(
            StatusCode::BAD_REQUEST,
            "give exactly one of image_bytes and image_path",
        )),
    }
}

pub fn stub_router(backend: StubBackend) -> Router {
    Router::new()
        .route("/extract", post(handle_extract))
        .with_state(Arc::new(backend))
}

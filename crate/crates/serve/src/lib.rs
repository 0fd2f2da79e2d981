//! HTTP inference service over a loaded generator.
//!
//! The API is stateless: every request carries the style vectors it needs,
//! so identical requests always produce identical response bodies.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use glyphforge_core::eval::interpolate_styles;
use glyphforge_core::eval::sheet::glyph_png;
use glyphforge_core::model::{sample_style, STYLE_DIM};
use glyphforge_core::train::content_id;
use glyphforge_core::{Checkpoint32, Generator32};

/// A generator fixed for the lifetime of the server.
pub struct LoadedModel {
    pub generator: Generator32,
    pub checkpoint_id: String,
}

impl LoadedModel {
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> glyphforge_core::Result<Self> {
        let ck = Checkpoint32::from_bytes(bytes)?;
        Ok(LoadedModel {
            generator: ck.generator()?,
            checkpoint_id: content_id(bytes),
        })
    }

    pub fn load(path: &Path) -> glyphforge_core::Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| glyphforge_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_checkpoint_bytes(&bytes)
    }

    fn num_classes(&self) -> usize {
        self.generator.config.num_classes
    }
}

/// Shared server state; `None` until a model is provided.
#[derive(Clone, Default)]
pub struct AppState {
    pub model: Option<Arc<LoadedModel>>,
}

impl AppState {
    pub fn with_model(model: LoadedModel) -> Self {
        AppState {
            model: Some(Arc::new(model)),
        }
    }
}

/// Letters for the first 26 classes, decimal ids beyond.
pub fn class_label(class: usize) -> String {
    if class < 26 {
        char::from(b'A' + class as u8).to_string()
    } else {
        class.to_string()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn no_model() -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "no_model_loaded",
            message: "no checkpoint is loaded".into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: message.into(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelInfo {
    pub image_size: usize,
    pub num_classes: usize,
    pub class_labels: Vec<String>,
    pub checkpoint_id: String,
    pub style_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    #[serde(default)]
    pub style: Option<Vec<f32>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Defaults to every class.
    #[serde(default)]
    pub classes: Option<Vec<usize>>,
    /// Only `png-base64` is supported.
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GlyphPayload {
    pub class: usize,
    pub label: String,
    pub png: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GenerateResponse {
    pub style: Vec<f32>,
    pub images: Vec<GlyphPayload>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InterpolateRequest {
    pub anchors: Vec<Vec<f32>>,
    pub steps: usize,
    #[serde(default)]
    pub class: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Frame {
    pub style: Vec<f32>,
    pub png: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct InterpolateResponse {
    pub class: usize,
    pub steps: usize,
    pub frames: Vec<Frame>,
}

fn model(state: &AppState) -> Result<&LoadedModel, ApiError> {
    state.model.as_deref().ok_or_else(ApiError::no_model)
}

fn check_style(style: &[f32]) -> Result<(), ApiError> {
    if style.len() != STYLE_DIM {
        return Err(ApiError::bad_request(format!(
            "style has {} entries, expected {STYLE_DIM}",
            style.len()
        )));
    }
    if style.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::bad_request("style entries must be finite"));
    }
    Ok(())
}

fn encode(img: &glyphforge_core::data::GlyphImage) -> Result<String, ApiError> {
    let png = glyph_png(img).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(STANDARD.encode(png))
}

async fn model_info(State(state): State<AppState>) -> Result<Json<ModelInfo>, ApiError> {
    let m = model(&state)?;
    Ok(Json(ModelInfo {
        image_size: m.generator.config.image_size,
        num_classes: m.num_classes(),
        class_labels: (0..m.num_classes()).map(class_label).collect(),
        checkpoint_id: m.checkpoint_id.clone(),
        style_dim: STYLE_DIM,
    }))
}

/// Validates a request and resolves its style vector.
pub fn resolve_style(req: &GenerateRequest) -> Result<Vec<f32>, ApiError> {
    if let Some(f) = &req.format {
        if f != "png-base64" {
            return Err(ApiError::bad_request(format!("unsupported format {f:?}; use \"png-base64\"")));
        }
    }
    match (&req.style, req.seed) {
        (Some(_), Some(_)) => Err(ApiError::bad_request("give either style or seed, not both")),
        (None, None) => Err(ApiError::bad_request("one of style or seed is required")),
        (Some(s), None) => {
            check_style(s)?;
            Ok(s.clone())
        }
        (None, Some(seed)) => Ok(sample_style(&mut ChaCha8Rng::seed_from_u64(seed))),
    }
}

async fn generate(
    State(state): State<AppState>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<GenerateResponse>, ApiError> {
    let m = model(&state)?;
    let Json(req) = body?;
    let style = resolve_style(&req)?;
    let classes = req.classes.unwrap_or_else(|| (0..m.num_classes()).collect());
    if let Some(c) = classes.iter().find(|&&c| c >= m.num_classes()) {
        return Err(ApiError::bad_request(format!(
            "class {c} out of range for {} classes",
            m.num_classes()
        )));
    }
    let glyphs = m
        .generator
        .generate_classes(&style, &classes)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let images = classes
        .iter()
        .zip(&glyphs)
        .map(|(&class, img)| {
            Ok(GlyphPayload {
                class,
                label: class_label(class),
                png: encode(img)?,
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Json(GenerateResponse { style, images }))
}

async fn interpolate(
    State(state): State<AppState>,
    body: Result<Json<InterpolateRequest>, JsonRejection>,
) -> Result<Json<InterpolateResponse>, ApiError> {
    let m = model(&state)?;
    let Json(req) = body?;
    if req.anchors.len() < 2 {
        return Err(ApiError::bad_request("at least 2 anchors are required"));
    }
    if req.steps == 0 {
        return Err(ApiError::bad_request("steps must be at least 1"));
    }
    for a in &req.anchors {
        check_style(a)?;
    }
    if req.class >= m.num_classes() {
        return Err(ApiError::bad_request(format!(
            "class {} out of range for {} classes",
            req.class,
            m.num_classes()
        )));
    }
    let path = interpolate_styles(&m.generator, &req.anchors, req.steps, req.class)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let frames = path
        .styles
        .iter()
        .zip(&path.frames)
        .map(|(style, img)| {
            Ok(Frame {
                style: style.clone(),
                png: encode(img)?,
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(Json(InterpolateResponse {
        class: req.class,
        steps: req.steps,
        frames,
    }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/model/info", get(model_info))
        .route("/generate", post(generate))
        .route("/interpolate", post(interpolate))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use spectra_core::cube::{decode_cube, CubeHeader};
use spectra_core::rgb::decode_rgb;
use spectra_core::{ControlPair, RgbImage};

use crate::error::ApiError;
use crate::session::{PreviewOutcome, Session};
use crate::AppState;

/// Header carrying the point-set revision a response reflects.
pub const REVISION_HEADER: &str = "x-revision";

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/sessions", axum::routing::post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/images/hsi", get(hsi_image))
        .route("/sessions/{id}/images/rgb", get(rgb_image))
        .route("/sessions/{id}/points", get(list_points).post(add_point))
        .route("/sessions/{id}/points/{index}", delete(remove_point))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn revision_header(revision: u64) -> (header::HeaderName, HeaderValue) {
    (header::HeaderName::from_static(REVISION_HEADER), HeaderValue::from(revision))
}

fn png_response(png: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], png).into_response()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub revision: u64,
    pub points: usize,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub reference_width: usize,
    pub reference_height: usize,
    pub stride: usize,
    pub sensor: String,
    /// Downsampled display images.
    pub hsi_image: String,
    pub rgb_image: String,
}

impl SessionInfo {
    fn of(s: &Session) -> Self {
        let (revision, pairs) = s.snapshot();
        Self {
            id: s.id.clone(),
            revision,
            points: pairs.len(),
            width: s.cube().width(),
            height: s.cube().height(),
            bands: s.cube().bands(),
            reference_width: s.reference().width(),
            reference_height: s.reference().height(),
            stride: s.stride,
            sensor: s.sensor.clone(),
            hsi_image: format!("/sessions/{}/images/hsi", s.id),
            rgb_image: format!("/sessions/{}/images/rgb", s.id),
        }
    }
}

#[derive(Default)]
struct Upload {
    header: Option<String>,
    data: Option<Vec<u8>>,
    rgb: Option<Vec<u8>>,
    stride: Option<usize>,
    sensor: Option<String>,
}

fn invalid_upload(message: impl Into<String>) -> ApiError {
    ApiError::bad_request("invalid_upload", message)
}

async fn read_upload(mut form: Multipart) -> Result<Upload, ApiError> {
    let mut up = Upload::default();
    while let Some(field) = form.next_field().await.map_err(|e| invalid_upload(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_owned();
        let bytes = field.bytes().await.map_err(|e| invalid_upload(e.body_text()))?.to_vec();
        let text = || String::from_utf8(bytes.clone()).map_err(|_| invalid_upload(format!("field {name} is not UTF-8")));
        match name.as_str() {
            "header" => up.header = Some(text()?),
            "data" => up.data = Some(bytes),
            "rgb" => up.rgb = Some(bytes),
            "stride" => {
                let stride = text()?
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&s| s >= 1)
                    .ok_or_else(|| invalid_upload("stride must be an integer >= 1"))?;
                up.stride = Some(stride);
            }
            "sensor" => up.sensor = Some(text()?),
            other => return Err(invalid_upload(format!("unexpected field {other:?}"))),
        }
    }
    Ok(up)
}

async fn create_session(State(state): State<Arc<AppState>>, form: Multipart) -> Result<Response, ApiError> {
    let up = read_upload(form).await?;
    let header_text = up.header.ok_or_else(|| invalid_upload("missing field \"header\""))?;
    let data = up.data.ok_or_else(|| invalid_upload("missing field \"data\""))?;
    let rgb = up.rgb.ok_or_else(|| invalid_upload("missing field \"rgb\""))?;

    let header = CubeHeader::parse(&header_text).map_err(|e| invalid_upload(e.to_string()))?;
    let cube = decode_cube(&header, &data).map_err(|e| invalid_upload(e.to_string()))?;
    let reference = decode_rgb(&rgb).map_err(|e| invalid_upload(e.to_string()))?.image;

    state.sessions.expire_idle(std::time::Instant::now());
    let id = uuid::Uuid::new_v4().simple().to_string();
    let stride = up.stride.unwrap_or(state.config.preview_stride);
    let session = state
        .sessions
        .insert(Session::new(id, cube, reference, stride, up.sensor.unwrap_or_default()));
    Ok((StatusCode::CREATED, Json(SessionInfo::of(&session))).into_response())
}

async fn session_info(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    let session = state.sessions.get(&id)?;
    Ok(Json(SessionInfo::of(&session)))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.sessions.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn encode(image: &RgbImage) -> Result<Response, ApiError> {
    image
        .to_png()
        .map(png_response)
        .map_err(|e| ApiError::internal("encode_failed", e.to_string()))
}

async fn hsi_image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    encode(&state.sessions.get(&id)?.hsi_display())
}

async fn rgb_image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    encode(&state.sessions.get(&id)?.reference_display())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointList {
    pub revision: u64,
    pub bands: usize,
    pub sensor: String,
    pub pairs: Vec<ControlPair>,
}

async fn list_points(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<PointList>, ApiError> {
    let session = state.sessions.get(&id)?;
    let (revision, pairs) = session.snapshot();
    Ok(Json(PointList {
        revision,
        bands: session.cube().bands(),
        sensor: session.sensor.clone(),
        pairs,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewPoint {
    pub hsi: [usize; 2],
    pub rgb: [usize; 2],
}

/// Reply to a point edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub revision: u64,
    pub points: usize,
}

async fn add_point(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<NewPoint>, JsonRejection>,
) -> Result<Json<Edit>, ApiError> {
    let session = state.sessions.get(&id)?;
    let Json(p) = body.map_err(|e| ApiError::bad_request("invalid_body", e.body_text()))?;
    let (revision, points) = session.add_point(p.hsi, p.rgb)?;
    Ok(Json(Edit { revision, points }))
}

async fn remove_point(
    State(state): State<Arc<AppState>>,
    Path((id, index)): Path<(String, String)>,
) -> Result<Json<Edit>, ApiError> {
    let session = state.sessions.get(&id)?;
    let index = index
        .parse::<usize>()
        .map_err(|_| ApiError::bad_request("invalid_index", format!("{index:?} is not a point index")))?;
    let (revision, points) = session.remove_point(index)?;
    Ok(Json(Edit { revision, points }))
}

#[derive(Debug, Deserialize)]
pub struct PreviewQuery {
    /// Revision the client already shows.
    pub since: Option<u64>,
}

/// Placeholder body for a preview of an empty point set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoPreview {
    pub code: String,
    pub message: String,
    pub revision: u64,
}

async fn preview(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<PreviewQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let Query(query) = query.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    if query.since == Some(session.revision()) {
        return Ok((StatusCode::NOT_MODIFIED, [revision_header(session.revision())]).into_response());
    }
    Ok(match session.preview(state.config.mls).await? {
        PreviewOutcome::Image(p) => {
            let mut response = png_response(p.png);
            let (name, value) = revision_header(p.revision);
            response.headers_mut().insert(name, value);
            response
        }
        PreviewOutcome::NoPoints { revision } => (
            [revision_header(revision)],
            Json(NoPreview {
                code: "no_control_points".into(),
                message: "add a control point to see a preview".into(),
                revision,
            }),
        )
            .into_response(),
    })
}

async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (revision, set) = state.sessions.get(&id)?.export()?;
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (
                header::CONTENT_DISPOSITION,
                HeaderValue::from_static("attachment; filename=\"control_points.json\""),
            ),
            revision_header(revision),
        ],
        set.to_json(),
    )
        .into_response())
}

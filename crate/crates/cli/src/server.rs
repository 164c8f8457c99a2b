//! Local HTTP API behind the annotation tool.
//!
//! Label writes need the version token from the last read of the label
//! file; a stale token is refused with 409 instead of overwriting. Writes go
//! to a temporary file that is renamed over the original, one writer per
//! video at a time. Landmark and frame files are only ever read.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::Engine;
use facetouch::ingest::{labels_to_csv, load_pgm, load_video, parse_labels, DatasetManifest, LoadOptions, VideoEntry};
use facetouch::model::{FrameRecord, LabelRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Mutex;

pub const SCHEMA_VERSION: u32 = 1;

/// Token of a label file that does not exist yet.
pub const EMPTY_VERSION: &str = "empty";

#[derive(Clone)]
pub struct AppState {
    manifest: Arc<DatasetManifest>,
    locks: Arc<HashMap<String, Mutex<()>>>,
}

impl AppState {
    pub fn new(manifest: DatasetManifest) -> Self {
        let locks = manifest.videos.iter().map(|v| (v.video_id.clone(), Mutex::new(()))).collect();
        Self { manifest: Arc::new(manifest), locks: Arc::new(locks) }
    }

    fn entry(&self, id: &str) -> Result<&VideoEntry, ApiError> {
        self.manifest
            .videos
            .iter()
            .find(|v| v.video_id == id)
            .ok_or_else(|| ApiError::not_found(format!("unknown video {id}")))
    }
}

/// Where labels of a video live. Videos without a labels file in the
/// manifest get `<video_id>.labels.csv` next to their landmarks.
pub fn labels_path(entry: &VideoEntry) -> PathBuf {
    entry.labels_path.clone().unwrap_or_else(|| {
        entry.landmarks_path.parent().unwrap_or(Path::new(".")).join(format!("{}.labels.csv", entry.video_id))
    })
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error, message: message.into() } }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_labels", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VideoSummary {
    pub video_id: String,
    pub infant_id: String,
    pub fps: f64,
    pub frame_count: usize,
    pub has_frames: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct VideoList {
    pub schema_version: u32,
    pub videos: Vec<VideoSummary>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FramePayload {
    pub schema_version: u32,
    pub video_id: String,
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major 8-bit grayscale, base64 encoded.
    pub pixels: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LandmarksPayload {
    pub schema_version: u32,
    pub video_id: String,
    pub frames: Vec<FrameRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct FrameLabel {
    pub frame_index: usize,
    pub on_head: bool,
    pub eyes: bool,
    pub ears: bool,
    pub nose: bool,
    pub mouth: bool,
    pub cheeks: bool,
}

impl FrameLabel {
    fn from_record(l: &LabelRecord) -> Self {
        let [eyes, ears, nose, mouth, cheeks] = l.regions;
        Self { frame_index: l.frame_index, on_head: l.on_head, eyes, ears, nose, mouth, cheeks }
    }

    fn to_record(&self, video_id: &str) -> LabelRecord {
        LabelRecord {
            video_id: video_id.to_string(),
            frame_index: self.frame_index,
            on_head: self.on_head,
            regions: [self.eyes, self.ears, self.nose, self.mouth, self.cheeks],
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct LabelsPayload {
    pub schema_version: u32,
    pub video_id: String,
    pub version: String,
    pub labels: Vec<FrameLabel>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LabelsUpdate {
    pub schema_version: u32,
    /// Token from the most recent GET.
    pub version: String,
    pub labels: Vec<FrameLabel>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SaveResult {
    pub schema_version: u32,
    pub video_id: String,
    pub version: String,
    pub count: usize,
}

pub fn version_token(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_label_file(path: &Path) -> Result<Option<Vec<u8>>, ApiError> {
    match std::fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ApiError::internal(format!("{}: {e}", path.display()))),
    }
}

async fn list_videos(State(state): State<AppState>) -> Result<Json<VideoList>, ApiError> {
    let mut videos = Vec::new();
    for v in &state.manifest.videos {
        let load = load_video(v, LoadOptions { strict: false }).map_err(|e| ApiError::internal(e.to_string()))?;
        videos.push(VideoSummary {
            video_id: v.video_id.clone(),
            infant_id: v.infant_id.clone(),
            fps: v.fps,
            frame_count: load.video.frames.len(),
            has_frames: v.frames_dir.is_some(),
        });
    }
    Ok(Json(VideoList { schema_version: SCHEMA_VERSION, videos }))
}

async fn get_frame(
    State(state): State<AppState>,
    UrlPath((id, index)): UrlPath<(String, usize)>,
) -> Result<Json<FramePayload>, ApiError> {
    let entry = state.entry(&id)?;
    let dir = entry.frames_dir.as_ref().ok_or_else(|| ApiError::not_found(format!("video {id} has no frames")))?;
    let path = dir.join(format!("frame_{index}.pgm"));
    if !path.exists() {
        return Err(ApiError::not_found(format!("video {id} has no frame {index}")));
    }
    let img = load_pgm(&path).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(FramePayload {
        schema_version: SCHEMA_VERSION,
        video_id: id,
        frame_index: index,
        width: img.width,
        height: img.height,
        pixels: base64::engine::general_purpose::STANDARD.encode(&img.pixels),
    }))
}

async fn get_landmarks(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<LandmarksPayload>, ApiError> {
    let entry = state.entry(&id)?;
    let load = load_video(entry, LoadOptions { strict: false }).map_err(|e| ApiError::internal(e.to_string()))?;
    let frames = load.video.frames.into_iter().map(|f| FrameRecord { image_ref: None, ..f }).collect();
    Ok(Json(LandmarksPayload { schema_version: SCHEMA_VERSION, video_id: id, frames }))
}

async fn get_labels(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<LabelsPayload>, ApiError> {
    let entry = state.entry(&id)?;
    let path = labels_path(entry);
    let _guard = state.locks[&id].lock().await;
    let (version, labels) = match read_label_file(&path)? {
        None => (EMPTY_VERSION.to_string(), Vec::new()),
        Some(bytes) => {
            let records = parse_labels(bytes.as_slice(), &path, LoadOptions { strict: false })
                .map_err(|e| ApiError::internal(e.to_string()))?;
            (version_token(&bytes), records.iter().map(FrameLabel::from_record).collect())
        }
    };
    Ok(Json(LabelsPayload { schema_version: SCHEMA_VERSION, video_id: id, version, labels }))
}

fn validate(update: &LabelsUpdate) -> Result<(), ApiError> {
    if update.schema_version != SCHEMA_VERSION {
        return Err(ApiError::invalid(format!("unsupported schema version {}", update.schema_version)));
    }
    let mut seen = std::collections::HashSet::new();
    for l in &update.labels {
        if !l.on_head && (l.eyes || l.ears || l.nose || l.mouth || l.cheeks) {
            return Err(ApiError::invalid(format!("frame {}: region flagged without on_head", l.frame_index)));
        }
        if !seen.insert(l.frame_index) {
            return Err(ApiError::invalid(format!("frame {} labeled twice", l.frame_index)));
        }
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

async fn post_labels(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(update): Json<LabelsUpdate>,
) -> Result<Json<SaveResult>, ApiError> {
    let entry = state.entry(&id)?;
    validate(&update)?;
    let path = labels_path(entry);
    let _guard = state.locks[&id].lock().await;
    let current = match read_label_file(&path)? {
        None => EMPTY_VERSION.to_string(),
        Some(bytes) => version_token(&bytes),
    };
    if update.version != current {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "version_conflict",
            format!("labels of {id} changed since version {}; reload first", update.version),
        ));
    }
    let mut records: Vec<LabelRecord> = update.labels.iter().map(|l| l.to_record(&id)).collect();
    records.sort_by_key(|l| l.frame_index);
    let csv = labels_to_csv(&records);
    write_atomic(&path, csv.as_bytes()).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    Ok(Json(SaveResult { schema_version: SCHEMA_VERSION, video_id: id, version: version_token(csv.as_bytes()), count: records.len() }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/videos", get(list_videos))
        .route("/api/videos/{id}/frames/{index}", get(get_frame))
        .route("/api/videos/{id}/landmarks", get(get_landmarks))
        .route("/api/videos/{id}/labels", get(get_labels).post(post_labels))
        .with_state(state)
}

/// Serves the API on `127.0.0.1:port` until the process is stopped.
pub async fn serve(manifest: DatasetManifest, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("annotation API on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(manifest))).await?;
    Ok(())
}

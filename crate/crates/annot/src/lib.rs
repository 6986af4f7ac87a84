//! HTTP/JSON backend for re-annotating initial-frame quads.
//!
//! Routes:
//!
//! | method | path | body / query | returns |
//! |---|---|---|---|
//! | GET | `/sequences` | | `[SequenceSummary]` |
//! | GET | `/sequences/{id}` | | `SequenceDetail` |
//! | GET | `/sequences/{id}/frames/{t}` | `Accept: image/png` or PGM | frame image |
//! | GET | `/sequences/{id}/annotation` | | `AnnotationView` |
//! | PUT | `/sequences/{id}/annotation` | `{"quad": [8 reals]}` | `AnnotationView` |
//! | POST | `/sessions` | `{"sequence": id, "reference"?: t}` | `SessionView` |
//! | GET | `/sessions/{sid}` | | `SessionView` |
//! | POST | `/sessions/{sid}/nudge` | `{"corner": 0..3, "dir": "up"\|"down"\|"left"\|"right"}` | `SessionView` |
//! | POST | `/sessions/{sid}/corner` | `{"corner", "x", "y"}` | `SessionView` |
//! | POST | `/sessions/{sid}/step` | `{"op": "double"\|"halve"}` | `SessionView` |
//! | POST | `/sessions/{sid}/reference` | `{"t"}` | `SessionView` |
//! | POST | `/sessions/{sid}/undo` | | `SessionView` |
//! | GET | `/sessions/{sid}/overlay` | `?ref=t` | blended crop image |
//! | POST | `/sessions/{sid}/save` | | `AnnotationView` |
//!
//! Errors are `{"error": message}` with 404 for unknown ids or frames, 422
//! for invalid corners, references and degenerate quads, 409 for an empty
//! undo stack and 500 for storage failures.

pub mod overlay;
pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use woftsam_core::geometry::{Point2, Quad};
use woftsam_core::image::{encode_pgm, GrayImage};

use overlay::{render_overlay, OverlayError};
use session::{Direction, Session, SessionError, SessionView, StepOp};
use store::{Dataset, SequenceEntry, StoreError};

pub const PGM_MIME: &str = "image/x-portable-graymap";
pub const ALIGNMENT_ERROR_HEADER: &str = "x-alignment-error";
pub const MEAN_ABS_DIFF_HEADER: &str = "x-mean-abs-diff";
pub const HOMOGRAPHY_HEADER: &str = "x-homography";
pub const ORIGIN_HEADER: &str = "x-crop-origin";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::NothingToUndo => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        log::error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<OverlayError> for ApiError {
    fn from(e: OverlayError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub data: Arc<Dataset>,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(data: Dataset) -> Self {
        Self {
            data: Arc::new(data),
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    fn sequence(&self, id: &str) -> ApiResult<&SequenceEntry> {
        self.data.get(id).ok_or_else(|| ApiError::not_found(format!("no sequence {id:?}")))
    }

    fn session(&self, sid: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let map = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        map.get(sid).cloned().ok_or_else(|| ApiError::not_found(format!("no session {sid:?}")))
    }

    /// Runs `f` with the session locked; other sessions stay available.
    fn with_session<T>(&self, sid: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        let s = self.session(sid)?;
        let mut guard = s.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub id: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub reference: usize,
    pub reannotated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDetail {
    #[serde(flatten)]
    pub summary: SequenceSummary,
    /// ground truth per frame, `null` where absent
    pub quads: Vec<Option<[f64; 8]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationView {
    pub sequence: String,
    /// re-annotation when present, else the original
    pub quad: [f64; 8],
    pub original: [f64; 8],
    pub reannotated: bool,
}

#[derive(Deserialize)]
struct QuadBody {
    quad: [f64; 8],
}

#[derive(Deserialize)]
struct NewSession {
    sequence: String,
    reference: Option<usize>,
}

#[derive(Deserialize)]
struct NudgeBody {
    corner: usize,
    dir: Direction,
}

#[derive(Deserialize)]
struct CornerBody {
    corner: usize,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct StepBody {
    op: StepOp,
}

#[derive(Deserialize)]
struct ReferenceBody {
    t: usize,
}

#[derive(Deserialize)]
struct OverlayQuery {
    #[serde(rename = "ref")]
    reference: Option<usize>,
}

fn summary(e: &SequenceEntry) -> ApiResult<SequenceSummary> {
    Ok(SequenceSummary {
        id: e.id.clone(),
        frames: e.frames,
        width: e.width,
        height: e.height,
        reference: e.default_reference(),
        reannotated: e.reannotation()?.is_some(),
    })
}

fn annotation_view(e: &SequenceEntry) -> ApiResult<AnnotationView> {
    let re = e.reannotation()?;
    Ok(AnnotationView {
        sequence: e.id.clone(),
        quad: re.unwrap_or_else(|| e.initial_quad()).to_flat(),
        original: e.initial_quad().to_flat(),
        reannotated: re.is_some(),
    })
}

fn wants_png(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("image/png"))
}

pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().expect("in-memory png header");
    w.write_image_data(&img.to_u8()).expect("in-memory png data");
    w.finish().expect("in-memory png");
    out
}

fn image_response(headers: &HeaderMap, img: &GrayImage) -> Response {
    if wants_png(headers) {
        ([(header::CONTENT_TYPE, "image/png")], encode_png(img)).into_response()
    } else {
        ([(header::CONTENT_TYPE, PGM_MIME)], encode_pgm(img)).into_response()
    }
}

fn checked_quad(v: [f64; 8]) -> ApiResult<Quad> {
    let q = Quad::from_flat(v);
    if v.iter().any(|x| !x.is_finite()) || !q.is_nondegenerate() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate quad"));
    }
    Ok(q)
}

async fn list_sequences(State(st): State<AppState>) -> ApiResult<Json<Vec<SequenceSummary>>> {
    st.data.sequences.values().map(summary).collect::<ApiResult<Vec<_>>>().map(Json)
}

async fn sequence_detail(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SequenceDetail>> {
    let e = st.sequence(&id)?;
    Ok(Json(SequenceDetail {
        summary: summary(e)?,
        quads: e.quads.iter().map(|q| q.map(|q| q.to_flat())).collect(),
    }))
}

async fn frame(State(st): State<AppState>, Path((id, t)): Path<(String, usize)>, headers: HeaderMap) -> ApiResult<Response> {
    let e = st.sequence(&id)?;
    if t >= e.frames {
        return Err(ApiError::not_found(format!("{id} has no frame {t}")));
    }
    if wants_png(&headers) {
        return Ok(image_response(&headers, &e.frame(t)?));
    }
    Ok(([(header::CONTENT_TYPE, PGM_MIME)], e.frame_bytes(t)?).into_response())
}

async fn get_annotation(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<AnnotationView>> {
    annotation_view(st.sequence(&id)?).map(Json)
}

async fn put_annotation(State(st): State<AppState>, Path(id): Path<String>, Json(body): Json<QuadBody>) -> ApiResult<Json<AnnotationView>> {
    let e = st.sequence(&id)?;
    e.save_reannotation(&checked_quad(body.quad)?)?;
    annotation_view(e).map(Json)
}

async fn create_session(State(st): State<AppState>, Json(body): Json<NewSession>) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let e = st.sequence(&body.sequence)?;
    let quad = e.reannotation()?.unwrap_or_else(|| e.initial_quad());
    let reference = body.reference.unwrap_or_else(|| e.default_reference());
    let sid = format!("s{}", st.next_id.fetch_add(1, Ordering::Relaxed));
    let s = Session::new(sid.clone(), e.id.clone(), quad, reference, e.frames)?;
    let view = s.view();
    st.sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(sid, Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(st): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<SessionView>> {
    st.with_session(&sid, |s| Ok(Json(s.view())))
}

async fn nudge(State(st): State<AppState>, Path(sid): Path<String>, Json(b): Json<NudgeBody>) -> ApiResult<Json<SessionView>> {
    st.with_session(&sid, |s| {
        s.nudge(b.corner, b.dir)?;
        Ok(Json(s.view()))
    })
}

async fn set_corner(State(st): State<AppState>, Path(sid): Path<String>, Json(b): Json<CornerBody>) -> ApiResult<Json<SessionView>> {
    st.with_session(&sid, |s| {
        s.set_corner(b.corner, Point2::new(b.x, b.y))?;
        Ok(Json(s.view()))
    })
}

async fn step(State(st): State<AppState>, Path(sid): Path<String>, Json(b): Json<StepBody>) -> ApiResult<Json<SessionView>> {
    st.with_session(&sid, |s| {
        s.apply_step(b.op);
        Ok(Json(s.view()))
    })
}

async fn set_reference(State(st): State<AppState>, Path(sid): Path<String>, Json(b): Json<ReferenceBody>) -> ApiResult<Json<SessionView>> {
    st.with_session(&sid, |s| {
        s.set_reference(b.t)?;
        Ok(Json(s.view()))
    })
}

async fn undo(State(st): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<SessionView>> {
    st.with_session(&sid, |s| {
        s.undo()?;
        Ok(Json(s.view()))
    })
}

async fn save(State(st): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<AnnotationView>> {
    let (seq, quad) = st.with_session(&sid, |s| Ok((s.sequence.clone(), s.quad())))?;
    let e = st.sequence(&seq)?;
    e.save_reannotation(&checked_quad(quad.to_flat())?)?;
    annotation_view(e).map(Json)
}

async fn overlay(
    State(st): State<AppState>,
    Path(sid): Path<String>,
    Query(q): Query<OverlayQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let (seq, working, default_ref) = st.with_session(&sid, |s| Ok((s.sequence.clone(), s.quad(), s.reference())))?;
    let e = st.sequence(&seq)?.clone();
    let t = q.reference.unwrap_or(default_ref);
    if t >= e.frames {
        return Err(ApiError::not_found(format!("{seq} has no frame {t}")));
    }
    let gt = e
        .gt(t)
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("frame {t} has no ground truth")))?;
    let ov = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let (init, reference) = (e.frame(0)?, e.frame(t)?);
        Ok(render_overlay(&init, &reference, &working, &gt, &e.initial_quad())?)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;

    let mut resp = image_response(&headers, &ov.image);
    let h = ov.h.to_row_major().map(|v| v.to_string()).join(",");
    let extra = [
        (ALIGNMENT_ERROR_HEADER, ov.alignment_error.to_string()),
        (MEAN_ABS_DIFF_HEADER, ov.mean_abs_diff.to_string()),
        (HOMOGRAPHY_HEADER, h),
        (ORIGIN_HEADER, format!("{},{}", ov.origin.0, ov.origin.1)),
    ];
    for (k, v) in extra {
        resp.headers_mut()
            .insert(HeaderName::from_static(k), HeaderValue::from_str(&v).expect("ascii header"));
    }
    Ok(resp)
}

/// CORS for the given UI origin, or any origin when `None`.
pub fn cors(origin: Option<&str>) -> CorsLayer {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let expose: Vec<HeaderName> = [ALIGNMENT_ERROR_HEADER, MEAN_ABS_DIFF_HEADER, HOMOGRAPHY_HEADER, ORIGIN_HEADER]
        .into_iter()
        .map(HeaderName::from_static)
        .collect();
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers(expose)
}

pub fn router(state: AppState, origin: Option<&str>) -> Router {
    Router::new()
        .route("/sequences", get(list_sequences))
        .route("/sequences/{id}", get(sequence_detail))
        .route("/sequences/{id}/frames/{t}", get(frame))
        .route("/sequences/{id}/annotation", get(get_annotation).put(put_annotation))
        .route("/sessions", post(create_session))
        .route("/sessions/{sid}", get(get_session))
        .route("/sessions/{sid}/nudge", post(nudge))
        .route("/sessions/{sid}/corner", post(set_corner))
        .route("/sessions/{sid}/step", post(step))
        .route("/sessions/{sid}/reference", post(set_reference))
        .route("/sessions/{sid}/undo", post(undo))
        .route("/sessions/{sid}/overlay", get(overlay))
        .route("/sessions/{sid}/save", post(save))
        .layer(cors(origin))
        .with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Serves `data` on `0.0.0.0:port` until the process is stopped.
pub async fn serve(data: PathBuf, port: u16, origin: Option<String>) -> Result<(), ServeError> {
    let dataset = Dataset::open(data)?;
    log::info!("{} sequences loaded", dataset.sequences.len());
    let app = router(AppState::new(dataset), origin.as_deref());
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

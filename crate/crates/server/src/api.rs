//! HTTP routes. All request and response bodies are JSON except the
//! transcript upload (plain text), the document report (plain text), the
//! CSV comparison export and the video stream.
//!
//! Mutations accept an optional `If-Match: <revision>` header and answer
//! with an `ETag` carrying the new revision.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use chrono::NaiveDate;
use colotag_core::compare::{align_anomalies, compare_cases, summarize_case, DEFAULT_MATCH_THRESHOLD_CM};
use colotag_core::ops::{add_annotation_with_note, add_tag, compute_phase_times, hierarchy_layout, remove_annotation, TagInput};
use colotag_core::report::{
    finalize_report, generate_report, render_report, set_manual_sections, ManualSections, PatientContext,
    RenderFormat,
};
use colotag_core::store::ProjectFile;
use colotag_core::transcript::import_transcript;
use colotag_core::{validate_timeline, AnnotationId, Interval, Label, TagOrigin, Timeline, VideoMeta};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower::ServiceExt;
use tower_http::services::ServeFile;

use crate::error::ApiError;
use crate::state::Registry;

type AppState = Arc<Registry>;
type ApiResult<T = Response> = Result<T, ApiError>;

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/procedures", get(list_procedures))
        .route("/procedures/{id}", get(get_procedure).put(create_procedure))
        .route("/procedures/{id}/annotations", post(post_annotation))
        .route("/procedures/{id}/annotations/{aid}", delete(delete_annotation))
        .route("/procedures/{id}/tags", post(post_tag))
        .route("/procedures/{id}/diagnostics", get(get_diagnostics))
        .route("/procedures/{id}/phase-times", get(get_phase_times))
        .route("/procedures/{id}/layout", get(get_layout))
        .route("/procedures/{id}/transcript", post(post_transcript))
        .route("/procedures/{id}/report", post(post_report).get(get_report))
        .route("/procedures/{id}/report/manual-sections", put(put_manual_sections))
        .route("/procedures/{id}/report/finalize", post(post_finalize))
        .route("/procedures/{id}/video", get(get_video))
        .route("/compare", get(get_compare))
        .with_state(registry)
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::InvalidRequest(e.to_string()))
}

/// Like [`parse_body`] but an empty body yields the default value.
fn parse_optional_body<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_body(body)
    }
}

fn expected_revision(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(value) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let text = value
        .to_str()
        .map_err(|_| ApiError::InvalidRequest("If-Match is not ASCII".into()))?;
    let text = text.trim().trim_start_matches("W/").trim_matches('"');
    text.parse()
        .map(Some)
        .map_err(|_| ApiError::InvalidRequest(format!("If-Match {text:?} is not a revision number")))
}

fn etag(revision: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{revision}\"")).expect("digits are a valid header")
}

fn with_revision(status: StatusCode, revision: u64, body: impl Serialize) -> Response {
    let mut response = (status, Json(body)).into_response();
    response.headers_mut().insert(header::ETAG, etag(revision));
    response
}

#[derive(Serialize)]
struct ProcedureListing {
    procedure_id: String,
    revision: u64,
    annotations: usize,
    tags: usize,
    complete: bool,
    reports: usize,
}

async fn list_procedures(State(registry): State<AppState>) -> ApiResult<Json<Vec<ProcedureListing>>> {
    let mut out = Vec::new();
    for id in registry.ids() {
        let p = registry.snapshot(&id)?;
        out.push(ProcedureListing {
            procedure_id: id,
            revision: p.revision,
            annotations: p.timeline.annotations.len(),
            tags: p.timeline.tags.len(),
            complete: p.timeline.first_cecum().is_some(),
            reports: p.reports.len(),
        });
    }
    Ok(Json(out))
}

async fn get_procedure(State(registry): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let project = registry.snapshot(&id)?;
    Ok(with_revision(StatusCode::OK, project.revision, &*project))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProcedure {
    video: VideoMeta,
    #[serde(default)]
    patient_ref: Option<String>,
    #[serde(default)]
    procedure_date: Option<NaiveDate>,
}

async fn create_procedure(State(registry): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: CreateProcedure = parse_body(&body)?;
    let mut timeline = Timeline::new(id, req.video);
    timeline.patient_ref = req.patient_ref;
    timeline.procedure_date = req.procedure_date;
    let project = registry.create(timeline)?;
    Ok(with_revision(StatusCode::CREATED, project.revision, &*project))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAnnotation {
    start_frame: u64,
    end_frame: u64,
    label: Label,
    #[serde(default)]
    note: Option<String>,
}

async fn post_annotation(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let req: NewAnnotation = parse_body(&body)?;
    let interval =
        Interval::new(req.start_frame, req.end_frame).map_err(|e| ApiError::InvalidRequest(e.to_string()))?;
    let (project, annotation_id) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            let (timeline, aid) = add_annotation_with_note(&p.timeline, interval, req.label, req.note)?;
            Ok((ProjectFile { timeline, ..p.clone() }, aid))
        })
        .await?;
    Ok(with_revision(
        StatusCode::CREATED,
        project.revision,
        json!({"annotation_id": annotation_id, "revision": project.revision}),
    ))
}

async fn delete_annotation(
    State(registry): State<AppState>,
    Path((id, aid)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult {
    let aid = AnnotationId::from(aid.as_str());
    let (project, ()) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            let timeline = remove_annotation(&p.timeline, &aid)?;
            Ok((ProjectFile { timeline, ..p.clone() }, ()))
        })
        .await?;
    Ok(with_revision(StatusCode::OK, project.revision, json!({"revision": project.revision})))
}

#[derive(Deserialize)]
struct NewTag {
    frame: u64,
    #[serde(flatten)]
    input: TagInput,
}

async fn post_tag(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let req: NewTag = parse_body(&body)?;
    let (project, tag_id) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            let (timeline, tid) = add_tag(&p.timeline, req.frame, req.input, TagOrigin::Manual)?;
            Ok((ProjectFile { timeline, ..p.clone() }, tid))
        })
        .await?;
    let class = project.timeline.tag(&tag_id).map(|t| t.classify());
    Ok(with_revision(
        StatusCode::CREATED,
        project.revision,
        json!({"tag_id": tag_id, "class": class, "revision": project.revision}),
    ))
}

async fn get_diagnostics(State(registry): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let project = registry.snapshot(&id)?;
    Ok(with_revision(StatusCode::OK, project.revision, validate_timeline(&project.timeline)))
}

async fn get_phase_times(State(registry): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let project = registry.snapshot(&id)?;
    let times = compute_phase_times(&project.timeline);
    Ok(with_revision(
        StatusCode::OK,
        project.revision,
        json!({
            "insertion_s": times.insertion_s,
            "cecum_dwell_s": times.cecum_dwell_s,
            "withdrawal_s": times.withdrawal_s,
            "complete": times.complete,
            "phase_ratio_warning": times.is_slow_insertion(),
        }),
    ))
}

async fn get_layout(State(registry): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let project = registry.snapshot(&id)?;
    let rows = hierarchy_layout(&project.timeline)?;
    Ok(with_revision(StatusCode::OK, project.revision, rows))
}

async fn post_transcript(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::InvalidRequest("transcript is not UTF-8".into()))?;
    let (project, import) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            let import = import_transcript(&p.timeline, text)?;
            let next = ProjectFile {
                timeline: import.timeline.clone(),
                ..p.clone()
            };
            Ok((next, import))
        })
        .await?;
    Ok(with_revision(
        StatusCode::OK,
        project.revision,
        json!({
            "events": import.events,
            "diagnostics": import.diagnostics,
            "malformed": import.malformed,
            "revision": project.revision,
        }),
    ))
}

async fn post_report(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let context: PatientContext = parse_optional_body(&body)?;
    let (project, report) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            let report = generate_report(&p.timeline, &context)?;
            let mut next = p.clone();
            next.reports.push(report.clone());
            Ok((next, report))
        })
        .await?;
    Ok(with_revision(StatusCode::CREATED, project.revision, report))
}

#[derive(Deserialize, Default)]
struct FormatQuery {
    #[serde(default)]
    format: Option<RenderFormat>,
}

async fn get_report(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<FormatQuery>,
) -> ApiResult {
    let project = registry.snapshot(&id)?;
    let report = project
        .latest_report()
        .ok_or_else(|| ApiError::NotFound(format!("procedure {id} has no report")))?;
    let format = query.format.unwrap_or(RenderFormat::Structured);
    let content_type = match format {
        RenderFormat::Structured => "application/json",
        RenderFormat::Document => "text/plain; charset=utf-8",
    };
    let mut response = (
        [(header::CONTENT_TYPE, content_type)],
        render_report(report, format),
    )
        .into_response();
    response.headers_mut().insert(header::ETAG, etag(project.revision));
    Ok(response)
}

fn replace_latest_report(
    p: &ProjectFile,
    change: impl FnOnce(&colotag_core::report::Report) -> Result<colotag_core::report::Report, ApiError>,
) -> ApiResult<(ProjectFile, colotag_core::report::Report)> {
    let latest = p
        .latest_report()
        .ok_or_else(|| ApiError::NotFound(format!("procedure {} has no report", p.timeline.procedure_id)))?;
    let updated = change(latest)?;
    let mut next = p.clone();
    *next.reports.last_mut().expect("checked above") = updated.clone();
    Ok((next, updated))
}

async fn put_manual_sections(
    State(registry): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let sections: ManualSections = parse_body(&body)?;
    let (project, report) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            replace_latest_report(p, |r| Ok(set_manual_sections(r, sections)?))
        })
        .await?;
    Ok(with_revision(StatusCode::OK, project.revision, report))
}

async fn post_finalize(State(registry): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    let (project, report) = registry
        .mutate(&id, expected_revision(&headers)?, |p| {
            replace_latest_report(p, |r| Ok(finalize_report(r)?))
        })
        .await?;
    Ok(with_revision(StatusCode::OK, project.revision, report))
}

#[derive(Deserialize)]
struct CompareQuery {
    #[serde(default)]
    ids: String,
    #[serde(default)]
    threshold_cm: Option<i64>,
    #[serde(default)]
    format: Option<String>,
}

async fn get_compare(State(registry): State<AppState>, Query(query): Query<CompareQuery>) -> ApiResult {
    let ids: Vec<&str> = query.ids.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let mut summaries = Vec::with_capacity(ids.len());
    for id in &ids {
        summaries.push(summarize_case(&registry.snapshot(id)?.timeline)?);
    }
    let table = compare_cases(&summaries)?;
    let threshold = query.threshold_cm.unwrap_or(DEFAULT_MATCH_THRESHOLD_CM);
    let alignment = match summaries.as_slice() {
        [left, right] => Some(align_anomalies(left, right, threshold)?),
        _ => None,
    };
    match query.format.as_deref() {
        None | Some("json") => Ok(Json(json!({
            "summaries": summaries,
            "table": table,
            "alignment": alignment,
        }))
        .into_response()),
        Some("csv") => Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], table.to_csv()).into_response()),
        Some(other) => Err(ApiError::InvalidRequest(format!("unknown format {other:?}"))),
    }
}

enum VideoSource {
    File(PathBuf),
    Remote(String),
}

fn video_source(registry: &Registry, uri: &str) -> ApiResult<VideoSource> {
    if uri.starts_with("http://") || uri.starts_with("https://") {
        return Ok(VideoSource::Remote(uri.to_string()));
    }
    let path = if uri.starts_with("file:") {
        url::Url::parse(uri)
            .ok()
            .and_then(|u| u.to_file_path().ok())
            .ok_or_else(|| ApiError::InvalidRequest(format!("bad file URI {uri:?}")))?
    } else {
        PathBuf::from(uri)
    };
    Ok(VideoSource::File(if path.is_relative() {
        registry.data_dir().join(path)
    } else {
        path
    }))
}

async fn get_video(State(registry): State<AppState>, Path(id): Path<String>, request: Request) -> ApiResult {
    let project = registry.snapshot(&id)?;
    let uri = project
        .timeline
        .video
        .source_uri
        .as_deref()
        .ok_or_else(|| ApiError::NotFound(format!("procedure {id} has no video source")))?;
    match video_source(&registry, uri)? {
        VideoSource::Remote(url) => Ok(Redirect::temporary(&url).into_response()),
        VideoSource::File(path) => {
            if !path.is_file() {
                return Err(ApiError::NotFound(format!("video file {} not found", path.display())));
            }
            let response = ServeFile::new(path)
                .oneshot(request)
                .await
                .unwrap_or_else(|never| match never {});
            Ok(response.map(Body::new))
        }
    }
}

//! HTTP/JSON facade over a loaded [`Session`].
//!
//! | method | path                          | body                  |
//! |--------|-------------------------------|-----------------------|
//! | GET    | `/health`                     | [`Health`]            |
//! | GET    | `/utterances`                 | `[UtteranceSummary]`  |
//! | GET    | `/utterances/{id}/alignment`  | [`AlignmentView`]     |
//! | POST   | `/edits`                      | [`EditJob`]           |
//! | GET    | `/audio/{id}`                 | `audio/wav`           |
//!
//! Errors are `{"error": code, "message": text}`. Edited artifacts live in an
//! append-only store keyed by a hash of the model checksum and the request,
//! so a repeated request is served from disk.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use speechedit_core::dsp::{HOP_SAMPLES, SAMPLE_RATE};
use speechedit_core::editing::{edit_utterance, EditOptions, EditReport, Utterance};
use speechedit_core::frontend::{words, EditRequest};

use crate::audio::encode_wav;
use crate::commands::Session;
use crate::corpus::audio_path;
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::melfile::write_mel;
use crate::vocoder::AnyVocoder;
use crate::Error;

/// Prefix of audio ids that refer to edited artifacts.
pub const EDIT_AUDIO_PREFIX: &str = "edit-";

pub struct AppState {
    pub session: Session,
    pub vocoder: AnyVocoder,
    pub store: PathBuf,
}

impl AppState {
    pub fn new(session: Session, vocoder: AnyVocoder, store: impl Into<PathBuf>) -> Self {
        AppState { session, vocoder, store: store.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_checksum: String,
    pub utterances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSummary {
    pub id: String,
    pub text: String,
    pub speaker: String,
    pub duration_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Pause,
}

/// A word or pause with its frame span `[start_frame, end_frame)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentToken {
    pub kind: TokenKind,
    pub text: String,
    /// Word index for words; index of the preceding word for pauses.
    pub word_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_seconds: f64,
    pub end_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentView {
    pub utterance_id: String,
    pub total_frames: usize,
    pub tokens: Vec<AlignmentToken>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditJob {
    pub job_id: String,
    pub request: EditRequest,
    pub status: JobStatus,
    pub result_audio_id: Option<String>,
    pub diagnostics: Option<EditReport>,
    pub error_message: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            e if e.is_user_error() => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError { status, code, message: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError { status: e.status(), code: "bad_request", message: e.body_text() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/utterances", get(list_utterances))
        .route("/utterances/{id}/alignment", get(get_alignment))
        .route("/edits", post(submit_edit))
        .route("/audio/{id}", get(get_audio))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Internal(e.to_string()))
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_checksum: s.session.checksum.clone(),
        utterances: s.session.corpus.utterances.len(),
    })
}

pub fn utterance_summaries(session: &Session) -> Vec<UtteranceSummary> {
    session
        .corpus
        .utterances
        .iter()
        .map(|u| UtteranceSummary {
            id: u.entry.id.clone(),
            text: u.entry.text.clone(),
            speaker: u.entry.speaker_id.clone(),
            duration_seconds: u.entry.samples as f64 / SAMPLE_RATE as f64,
        })
        .collect()
}

async fn list_utterances(State(s): State<Arc<AppState>>) -> Json<Vec<UtteranceSummary>> {
    Json(utterance_summaries(&s.session))
}

fn frame_seconds(frame: usize) -> f64 {
    (frame * HOP_SAMPLES) as f64 / SAMPLE_RATE as f64
}

/// Merges phone spans into word tokens; each pause phone becomes its own token.
pub fn alignment_view(session: &Session, id: &str) -> crate::Result<AlignmentView> {
    let utt = session.corpus.get(id)?;
    let text_words = words(&utt.entry.text);
    let mut tokens: Vec<AlignmentToken> = Vec::new();
    for e in utt.alignment.entries() {
        let pause = e.phone == speechedit_core::frontend::Phone::pause().symbol();
        let kind = if pause { TokenKind::Pause } else { TokenKind::Word };
        match tokens.last_mut() {
            Some(t) if !pause && t.kind == TokenKind::Word && t.word_index == e.word_index => {
                t.end_frame = e.end_frame;
                t.end_seconds = frame_seconds(e.end_frame);
            }
            _ => tokens.push(AlignmentToken {
                kind,
                text: if pause { String::new() } else { text_words.get(e.word_index).cloned().unwrap_or_default() },
                word_index: e.word_index,
                start_frame: e.start_frame,
                end_frame: e.end_frame,
                start_seconds: frame_seconds(e.start_frame),
                end_seconds: frame_seconds(e.end_frame),
            }),
        }
    }
    Ok(AlignmentView { utterance_id: id.to_string(), total_frames: utt.alignment.total_frames, tokens })
}

async fn get_alignment(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<AlignmentView>> {
    Ok(Json(alignment_view(&s.session, &id)?))
}

/// Content address of an edit: SHA-256 over the model checksum and the
/// request JSON.
pub fn job_id(model_checksum: &str, request: &EditRequest) -> String {
    let mut h = Sha256::new();
    h.update(model_checksum.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(request).expect("request serializes"));
    hex::encode(h.finalize())
}

fn job_path(store: &Path, id: &str) -> PathBuf {
    store.join(format!("{id}.json"))
}

pub fn edit_wav_path(store: &Path, id: &str) -> PathBuf {
    store.join(format!("{id}.wav"))
}

pub fn edit_mel_path(store: &Path, id: &str) -> PathBuf {
    store.join(format!("{id}.mel"))
}

/// Runs an edit synchronously, or returns the stored job for a repeated
/// request. Edit failures come back as a failed job, not an error.
pub fn run_edit(state: &AppState, request: EditRequest) -> crate::Result<EditJob> {
    let session = &state.session;
    let utt = session.corpus.get(&request.utterance_id)?;
    let id = job_id(&session.checksum, &request);
    let path = job_path(&state.store, &id);
    if path.exists() {
        return read_json(&path);
    }
    let speaker = session.speaker_index(&utt.entry.speaker_id)?;
    let u = Utterance { mel: &utt.mel, alignment: &utt.alignment, speaker };
    let result = match edit_utterance(session.checkpoint.models(), &u, &request, &session.lexicon, EditOptions::default()) {
        Ok(r) => r,
        Err(e) if !matches!(e, speechedit_core::Error::NonFinite(_)) => {
            return Ok(EditJob {
                job_id: id,
                request,
                status: JobStatus::Failed,
                result_audio_id: None,
                diagnostics: None,
                error_message: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let wave = state.vocoder.vocode(&result.edited_mel)?;
    write_mel(&edit_mel_path(&state.store, &id), &result.edited_mel)?;
    write_atomic(&edit_wav_path(&state.store, &id), &encode_wav(&wave)?)?;
    let job = EditJob {
        job_id: id.clone(),
        request,
        status: JobStatus::Done,
        result_audio_id: Some(format!("{EDIT_AUDIO_PREFIX}{id}")),
        diagnostics: Some(result.report()),
        error_message: None,
    };
    write_json(&path, &job)?;
    Ok(job)
}

async fn submit_edit(
    State(s): State<Arc<AppState>>,
    body: Result<Json<EditRequest>, JsonRejection>,
) -> ApiResult<Json<EditJob>> {
    let Json(request) = body?;
    let job = tokio::task::spawn_blocking(move || run_edit(&s, request))
        .await
        .map_err(|e| ApiError::from(Error::Internal(e.to_string())))??;
    Ok(Json(job))
}

fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

async fn get_audio(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let path = match id.strip_prefix(EDIT_AUDIO_PREFIX) {
        Some(hash) if is_hex_digest(hash) => edit_wav_path(&s.store, hash),
        _ => {
            s.session.corpus.get(&id)?;
            audio_path(&s.session.corpus.root, &id)
        }
    };
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::not_found(format!("audio {id:?}")))?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

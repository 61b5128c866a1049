use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use canecov_core::classifier::{self, ClassifierConfig, ClassifierParams};
use canecov_core::coverage::coverage_report;
use canecov_core::image_io::{decode_image, encode_png, load_image, ImageBuffer, ImageFormat};
use canecov_core::superres::{self, GeneratorConfig, GeneratorParams};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

use crate::args::ServeArgs;

const MAX_UPLOAD_BYTES: usize = 64 << 20;
const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

pub struct AppState {
    pub images: PathBuf,
    pub classifier: Option<(ClassifierParams<f64>, ClassifierConfig)>,
    pub generator: Option<(GeneratorParams<f64>, GeneratorConfig)>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = format!("{{\"error\":{}}}", serde_json::to_string(&self.1).expect("string serializes"));
        (self.0, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn gallery(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && ImageFormat::from_path(p).is_ok())
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> Option<&str> {
    p.file_stem().and_then(|s| s.to_str())
}

fn find_image(dir: &Path, id: &str) -> Result<PathBuf, ApiError> {
    if !valid_id(id) {
        return Err(ApiError::bad_request(format!("invalid image id `{id}`")));
    }
    gallery(dir)
        .map_err(ApiError::internal)?
        .into_iter()
        .find(|p| stem(p) == Some(id))
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no image with id `{id}`")))
}

fn load_by_id(dir: &Path, id: &str) -> Result<ImageBuffer, ApiError> {
    let path = find_image(dir, id)?;
    load_image(&path).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

fn parse_body<'a, T: Deserialize<'a>>(body: &'a [u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<F>(f: F) -> ApiResult
where
    F: FnOnce() -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

async fn health() -> Response {
    json("{\"status\":\"ok\"}".into())
}

async fn list_images(State(state): State<Arc<AppState>>) -> ApiResult {
    blocking(move || {
        let mut items = Vec::new();
        for path in gallery(&state.images).map_err(ApiError::internal)? {
            let (Some(id), Some(name)) = (stem(&path), path.file_name().and_then(|n| n.to_str())) else {
                continue;
            };
            if !valid_id(id) {
                continue;
            }
            // unreadable files are left out of the gallery
            if let Ok(img) = load_image(&path) {
                items.push(format!(
                    "{{\"id\":{},\"name\":{},\"w\":{},\"h\":{}}}",
                    serde_json::to_string(id).unwrap(),
                    serde_json::to_string(name).unwrap(),
                    img.width(),
                    img.height()
                ));
            }
        }
        Ok(json(format!("[{}]", items.join(","))))
    })
    .await
}

async fn upload(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    blocking(move || {
        if !body.starts_with(PNG_SIGNATURE) {
            return Err(ApiError(StatusCode::UNSUPPORTED_MEDIA_TYPE, "only PNG uploads are accepted".into()));
        }
        decode_image(&body).map_err(|e| ApiError::bad_request(format!("unreadable PNG: {e}")))?;
        let digest = Sha256::digest(&body);
        let id: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        let name = format!("{id}.png");
        if !state.images.join(&name).exists() {
            write_atomic(&state.images, &name, &body).map_err(ApiError::internal)?;
        }
        Ok(json(format!("{{\"id\":\"{id}\"}}")))
    })
    .await
}

#[derive(Deserialize)]
struct CoverageRequest {
    #[serde(alias = "image_id")]
    id: String,
    threshold: f64,
}

/// The coverage report exactly as `canecov coverage --json` prints it, plus the mask as base64 PNG.
pub fn coverage_response(image: &ImageBuffer, threshold: f64) -> Result<String, ApiError> {
    if !(0.0..=10.0).contains(&threshold) {
        return Err(ApiError::bad_request(format!("threshold must be between 0 and 10, got {threshold}")));
    }
    let (report, mask) = coverage_report(image, threshold).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let png = encode_png(&mask.to_image()).map_err(ApiError::internal)?;
    let mut body = report.to_json();
    body.pop();
    body.push_str(&format!(
        ",\"mask_png\":\"{}\"}}",
        base64::engine::general_purpose::STANDARD.encode(png)
    ));
    Ok(body)
}

async fn coverage(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    blocking(move || {
        let req: CoverageRequest = parse_body(&body)?;
        let image = load_by_id(&state.images, &req.id)?;
        Ok(json(coverage_response(&image, req.threshold)?))
    })
    .await
}

#[derive(Deserialize)]
struct PredictRequest {
    #[serde(alias = "image_id")]
    id: String,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    blocking(move || {
        let req: PredictRequest = parse_body(&body)?;
        let Some((params, cfg)) = &state.classifier else {
            return Err(ApiError(
                StatusCode::SERVICE_UNAVAILABLE,
                "no classifier loaded; restart serve with --classifier-model".into(),
            ));
        };
        let image = load_by_id(&state.images, &req.id)?;
        let p = classifier::predict(&image, cfg, params).map_err(ApiError::internal)?;
        Ok(json(p.to_json()))
    })
    .await
}

#[derive(Deserialize)]
struct EnhanceRequest {
    #[serde(alias = "image_id")]
    id: String,
    outscale: usize,
}

async fn enhance(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    blocking(move || {
        let req: EnhanceRequest = parse_body(&body)?;
        let image_path = find_image(&state.images, &req.id)?;
        if req.outscale == 1 {
            return Ok(json(format!("{{\"id_out\":\"{}\"}}", req.id)));
        }
        let Some((params, cfg)) = &state.generator else {
            return Err(ApiError(
                StatusCode::SERVICE_UNAVAILABLE,
                "no generator loaded; restart serve with --sr-model".into(),
            ));
        };
        if cfg.out_scale != req.outscale {
            return Err(ApiError::bad_request(format!(
                "the loaded generator produces x{}, not x{}",
                cfg.out_scale, req.outscale
            )));
        }
        let image = load_image(&image_path).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let out = superres::enhance(&image, cfg, params).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let id_out = format!("{}_x{}", req.id, req.outscale);
        let png = encode_png(&out).map_err(ApiError::internal)?;
        write_atomic(&state.images, &format!("{id_out}.png"), &png).map_err(ApiError::internal)?;
        Ok(json(format!(
            "{{\"id_out\":\"{id_out}\",\"w\":{},\"h\":{}}}",
            out.width(),
            out.height()
        )))
    })
    .await
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>canecov</title></head>\n\
<body><h1>canecov</h1><p>The API is running. Start the server with <code>--static-dir</code> \
pointing at a built web UI to use the threshold tool here.</p></body></html>\n";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/images", get(list_images))
        .route("/upload", post(upload))
        .route("/coverage", post(coverage))
        .route("/predict", post(predict))
        .route("/enhance", post(enhance))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

pub fn run(a: &ServeArgs) -> anyhow::Result<()> {
    let classifier = match &a.classifier_model {
        Some(p) => Some(
            ClassifierParams::<f64>::load(p).with_context(|| format!("loading classifier model {}", p.display()))?,
        ),
        None => None,
    };
    let generator = match &a.sr_model {
        Some(p) => {
            Some(GeneratorParams::<f64>::load(p).with_context(|| format!("loading generator model {}", p.display()))?)
        }
        None => None,
    };
    fs::create_dir_all(&a.images).with_context(|| format!("creating {}", a.images.display()))?;
    let state = Arc::new(AppState {
        images: a.images.clone(),
        classifier,
        generator,
    });

    let listener =
        TcpListener::bind((a.addr.as_str(), a.port)).with_context(|| format!("cannot listen on {}:{}", a.addr, a.port))?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let app = router(state, a.static_dir.as_deref());

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        axum::serve(listener, app).await?;
        anyhow::Ok(())
    })
}

//! Local HTTP service: stability jobs run in the background, posteriors are
//! recomputed from the stored selection matrix on every request.
//!
//! Routes
//!
//! | method | path                     |                                        |
//! |--------|--------------------------|----------------------------------------|
//! | GET    | `/health`                | liveness                               |
//! | POST   | `/jobs`                  | queue a job, `202 {"id": ...}`         |
//! | GET    | `/jobs/{id}`             | status, and counts once done           |
//! | GET    | `/jobs/{id}/matrix`      | selection matrix as CSV                |
//! | POST   | `/jobs/{id}/posteriors`  | posterior summaries for a prior set    |
//! | GET    | `/variance-surface`      | `?b=&n=&gamma=` posterior variance grid |
//! | GET    | `/elicit`                | `?zeta=&xi=&b=` prior for two answers  |
//!
//! Anything else under GET is looked up in the UI bundle directory.
//! Errors are JSON objects `{"code": ..., "message": ...}`.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, RwLock};
use std::thread;

use anyhow::{bail, Context, Result};
use log::{error, info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tiny_http::{Header, Method, Request, Response};

use stabsel_core::bayes::{
    decision_report, elicit, integer_alpha_grid, resolve_priors, variance_surface, Adjustment, BayesError, PriorEntry,
    PriorSpec,
};
use stabsel_core::data::{self, Dataset, SyntheticConfig};
use stabsel_core::rng::derive_seed;
use stabsel_core::solver::{CvOptions, Selector};
use stabsel_core::stability::{run_stability, SelectionMatrix, StabilityConfig};

use crate::config::StabilitySection;

const HANDLER_THREADS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetRef {
    Synthetic(SyntheticConfig),
    Csv {
        path: PathBuf,
        #[serde(default = "default_response")]
        response: String,
    },
    /// A selection matrix in CSV form; the job is done on arrival.
    Matrix { csv: String },
}

fn default_response() -> String {
    "y".into()
}

fn default_selector() -> Selector {
    Selector::Cv1se(CvOptions::new(0.2, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub dataset: DatasetRef,
    #[serde(default = "default_selector")]
    pub selector: Selector,
    pub stability: Option<StabilitySection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
struct JobRecord {
    status: JobStatus,
    request: JobRequest,
    matrix: Option<Arc<SelectionMatrix>>,
    error: Option<String>,
}

struct Task {
    id: String,
    dataset: Dataset,
    selector: Selector,
    stability: StabilitySection,
}

struct State {
    jobs: RwLock<HashMap<String, JobRecord>>,
    queue: Mutex<mpsc::Sender<Task>>,
    next: AtomicU64,
    nonce: u64,
    ui_dir: Option<PathBuf>,
}

/// An error response.
#[derive(Debug)]
struct ApiError {
    status: u16,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
    fn malformed(message: impl Into<String>) -> Self {
        Self::new(400, "malformed_request", message)
    }
    fn invalid(message: impl Into<String>) -> Self {
        Self::new(422, "invalid_parameters", message)
    }
    fn not_found(message: impl Into<String>) -> Self {
        Self::new(404, "not_found", message)
    }
}

impl From<BayesError> for ApiError {
    fn from(e: BayesError) -> Self {
        Self::invalid(e.to_string())
    }
}

enum Body {
    Json(u16, serde_json::Value),
    Text(u16, &'static str, Vec<u8>),
}

type Reply = Result<Body, ApiError>;

fn ok_json(value: impl Serialize) -> Reply {
    Ok(Body::Json(200, serde_json::to_value(value).expect("response serializes")))
}

/// Handle to a running service.
pub struct Server {
    http: Arc<tiny_http::Server>,
    state: Arc<State>,
    worker: Option<thread::JoinHandle<()>>,
    handlers: Vec<thread::JoinHandle<()>>,
}

impl Server {
    /// Binds `host:port`; port 0 is rejected.
    pub fn bind(host: &str, port: u16, ui_dir: Option<PathBuf>) -> Result<Self> {
        if port == 0 {
            bail!("port must be between 1 and 65535");
        }
        let listener = TcpListener::bind((host, port)).with_context(|| format!("cannot listen on {host}:{port}"))?;
        Self::from_listener(listener, ui_dir)
    }

    pub fn from_listener(listener: TcpListener, ui_dir: Option<PathBuf>) -> Result<Self> {
        let http = tiny_http::Server::from_listener(listener, None).map_err(|e| anyhow::anyhow!(e))?;
        let (tx, rx) = mpsc::channel::<Task>();
        let nonce = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64)
            ^ u64::from(std::process::id());
        let state = Arc::new(State {
            jobs: RwLock::new(HashMap::new()),
            queue: Mutex::new(tx),
            next: AtomicU64::new(0),
            nonce,
            ui_dir,
        });
        let worker_state = Arc::clone(&state);
        let worker = thread::Builder::new()
            .name("stabsel-jobs".into())
            .spawn(move || {
                for task in rx {
                    run_task(&worker_state, task);
                }
            })?;
        Ok(Self {
            http: Arc::new(http),
            state,
            worker: Some(worker),
            handlers: Vec::new(),
        })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.http.server_addr().to_ip()
    }

    /// Starts the request handlers and returns immediately.
    pub fn start(&mut self) {
        for k in 0..HANDLER_THREADS {
            let http = Arc::clone(&self.http);
            let state = Arc::clone(&self.state);
            let h = thread::Builder::new()
                .name(format!("stabsel-http-{k}"))
                .spawn(move || {
                    for request in http.incoming_requests() {
                        handle(&state, request);
                    }
                })
                .expect("spawn handler thread");
            self.handlers.push(h);
        }
    }

    /// Serves until the process is terminated.
    pub fn run(mut self) {
        self.start();
        for h in std::mem::take(&mut self.handlers) {
            let _ = h.join();
        }
    }

    /// Stops accepting requests and joins every thread.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.handlers.len().max(1) {
            self.http.unblock();
        }
        for h in std::mem::take(&mut self.handlers) {
            let _ = h.join();
        }
        // Dropping the last sender ends the worker loop once the queue drains.
        let (tx, _) = mpsc::channel();
        *self.state.queue.lock().unwrap() = tx;
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if !self.handlers.is_empty() || self.worker.is_some() {
            self.stop();
        }
    }
}

fn run_task(state: &State, task: Task) {
    let result = task
        .selector
        .resolve(&task.dataset)
        .map_err(|e| e.to_string())
        .and_then(|net| {
            let cfg = StabilityConfig {
                b: task.stability.b,
                net,
                seed: task.stability.seed,
                pi_thr: 0.6,
            };
            run_stability(&task.dataset, &cfg).map_err(|e| e.to_string())
        });
    let mut jobs = state.jobs.write().unwrap();
    let Some(job) = jobs.get_mut(&task.id) else {
        return;
    };
    match result {
        Ok(m) => {
            info!("job {} done", task.id);
            job.matrix = Some(Arc::new(m));
            job.status = JobStatus::Done;
        }
        Err(e) => {
            warn!("job {} failed: {e}", task.id);
            job.error = Some(e);
            job.status = JobStatus::Failed;
        }
    }
}

fn handle(state: &State, mut request: Request) {
    let url = request.url().to_string();
    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
    let segments: Vec<&str> = path.split('/').filter(|s| !s.is_empty()).collect();
    let mut body = String::new();
    let reply = match request.as_reader().read_to_string(&mut body) {
        Err(e) => Err(ApiError::malformed(format!("unreadable body: {e}"))),
        Ok(_) => route(state, request.method(), &segments, query, &body),
    };
    let response = match reply {
        Ok(Body::Json(status, value)) => json_response(status, &value),
        Ok(Body::Text(status, content_type, bytes)) => Response::from_data(bytes)
            .with_status_code(status)
            .with_header(header("Content-Type", content_type)),
        Err(e) => json_response(e.status, &json!({ "code": e.code, "message": e.message })),
    };
    if let Err(e) = request.respond(response) {
        error!("cannot send response for {url}: {e}");
    }
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header")
}

fn json_response(status: u16, value: &serde_json::Value) -> Response<std::io::Cursor<Vec<u8>>> {
    let mut text = serde_json::to_string(value).expect("json value serializes");
    text.push('\n');
    Response::from_string(text)
        .with_status_code(status)
        .with_header(header("Content-Type", "application/json"))
}

fn route(state: &State, method: &Method, segments: &[&str], query: &str, body: &str) -> Reply {
    match (method, segments) {
        (Method::Get, ["health"]) => ok_json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") })),
        (Method::Post, ["jobs"]) => create_job(state, body),
        (Method::Get, ["jobs", id]) => job_status(state, id),
        (Method::Get, ["jobs", id, "matrix"]) => {
            let m = done_matrix(state, id)?;
            Ok(Body::Text(200, "text/csv", m.to_csv_string().into_bytes()))
        }
        (Method::Post, ["jobs", id, "posteriors"]) => posteriors(state, id, body),
        (Method::Get, ["variance-surface"]) => surface(query),
        (Method::Get, ["elicit"]) => elicit_preview(query),
        (Method::Get, _) => ui_file(state, segments),
        (_, ["health" | "jobs" | "variance-surface" | "elicit", ..]) => {
            Err(ApiError::new(405, "method_not_allowed", format!("{method} is not supported here")))
        }
        _ => Err(ApiError::not_found("no such route")),
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    let text = if body.trim().is_empty() { "{}" } else { body };
    serde_json::from_str(text).map_err(|e| ApiError::malformed(e.to_string()))
}

fn create_job(state: &State, body: &str) -> Reply {
    let request: JobRequest = parse_body(body)?;
    let k = state.next.fetch_add(1, Ordering::Relaxed);
    let id = format!("{:016x}", derive_seed(state.nonce, k));

    let task = match &request.dataset {
        DatasetRef::Matrix { csv } => {
            let m = SelectionMatrix::from_csv_str(csv, None).map_err(|e| ApiError::invalid(e.to_string()))?;
            let record = JobRecord {
                status: JobStatus::Done,
                request: request.clone(),
                matrix: Some(Arc::new(m)),
                error: None,
            };
            state.jobs.write().unwrap().insert(id.clone(), record);
            None
        }
        source => {
            let Some(stability) = request.stability else {
                return Err(ApiError::invalid("`stability` with at least `b` is required"));
            };
            if stability.b == 0 {
                return Err(ApiError::invalid("stability.b must be at least 1"));
            }
            if let Selector::Fixed(net) = &request.selector {
                net.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
            }
            let dataset = match source {
                DatasetRef::Synthetic(cfg) => data::gen_synthetic(cfg),
                DatasetRef::Csv { path, response } => data::load_csv(path, response),
                DatasetRef::Matrix { .. } => unreachable!(),
            }
            .map_err(|e| ApiError::invalid(e.to_string()))?;
            if dataset.n() / 2 < 2 {
                return Err(ApiError::invalid(format!("{} rows are too few to subsample", dataset.n())));
            }
            Some(Task {
                id: id.clone(),
                dataset,
                selector: request.selector,
                stability,
            })
        }
    };
    if let Some(task) = task {
        state.jobs.write().unwrap().insert(
            id.clone(),
            JobRecord {
                status: JobStatus::Running,
                request,
                matrix: None,
                error: None,
            },
        );
        info!("job {id} queued");
        if state.queue.lock().unwrap().send(task).is_err() {
            return Err(ApiError::new(503, "shutting_down", "the job worker has stopped"));
        }
    }
    Ok(Body::Json(202, json!({ "id": id })))
}

fn find_job(state: &State, id: &str) -> Result<JobRecord, ApiError> {
    state
        .jobs
        .read()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no job '{id}'")))
}

fn done_matrix(state: &State, id: &str) -> Result<Arc<SelectionMatrix>, ApiError> {
    let job = find_job(state, id)?;
    match (job.status, job.matrix) {
        (JobStatus::Done, Some(m)) => Ok(m),
        (JobStatus::Failed, _) => Err(ApiError::new(
            409,
            "job_failed",
            format!("job '{id}' failed: {}", job.error.unwrap_or_default()),
        )),
        _ => Err(ApiError::new(409, "job_not_done", format!("job '{id}' is still running"))),
    }
}

fn job_status(state: &State, id: &str) -> Reply {
    let job = find_job(state, id)?;
    let mut out = json!({ "id": id, "status": job.status, "request": job.request });
    if let Some(e) = &job.error {
        out["error"] = json!(e);
    }
    if let Some(m) = &job.matrix {
        out["b"] = json!(m.b());
        out["p"] = json!(m.p());
        out["names"] = json!(m.names);
        out["counts"] = json!(m.counts());
        if m.lambda.is_finite() {
            out["lambda"] = json!(m.lambda);
            out["alpha_mix"] = json!(m.alpha_mix);
        }
    }
    ok_json(out)
}

fn default_pi_thr() -> f64 {
    0.6
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosteriorRequest {
    #[serde(default)]
    priors: Vec<PriorEntry>,
    #[serde(default = "default_pi_thr")]
    pi_thr: f64,
    #[serde(default = "default_level")]
    level: f64,
}

fn posteriors(state: &State, id: &str, body: &str) -> Reply {
    let m = done_matrix(state, id)?;
    let req: PosteriorRequest = parse_body(body)?;
    let b = m.b() as u64;
    let priors = resolve_priors(&m.names, &req.priors, b)?;
    let rows = decision_report(&m, &priors, req.pi_thr, req.level)?;
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "index": r.index,
                "name": r.name,
                "n_j": r.n_j,
                "prior": { "alpha": r.prior.alpha, "beta": r.prior.beta, "source": r.prior.source },
                "mean": r.posterior.mean,
                "variance": r.posterior.variance,
                "ci_low": r.posterior.ci_low,
                "ci_high": r.posterior.ci_high,
                "selected": r.posterior.selected,
                "frequentist_selected": r.frequentist_selected,
            })
        })
        .collect();
    ok_json(json!({ "id": id, "b": b, "pi_thr": req.pi_thr, "level": req.level, "rows": rows }))
}

/// `key=value&...`; values here are plain numbers, so no percent-decoding.
fn query_map(query: &str) -> HashMap<&str, &str> {
    query.split('&').filter_map(|kv| kv.split_once('=')).collect()
}

fn query_num<T: std::str::FromStr>(q: &HashMap<&str, &str>, key: &str) -> Result<Option<T>, ApiError> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::malformed(format!("`{key}` must be a number, got '{v}'"))))
        .transpose()
}

fn surface(query: &str) -> Reply {
    let q = query_map(query);
    let b: u64 = query_num(&q, "b")?.ok_or_else(|| ApiError::malformed("`b` is required"))?;
    let counts: Vec<u64> = match q.get("n") {
        None => (0..=b).collect(),
        Some(list) => list
            .split(',')
            .map(|v| v.parse().map_err(|_| ApiError::malformed(format!("`n` must list counts, got '{v}'"))))
            .collect::<Result<_, _>>()?,
    };
    let gamma: u64 = query_num(&q, "gamma")?.unwrap_or(b);
    let grid = integer_alpha_grid(gamma);
    let s = variance_surface(b, &counts, &grid, gamma as f64)?;
    let rows: Vec<_> = s
        .rows
        .iter()
        .map(|r| {
            json!({
                "n_j": r.n_j,
                "non_informative": r.non_informative,
                "informative": r.informative,
                "argmax_alpha": r.argmax(&grid),
            })
        })
        .collect();
    ok_json(json!({ "b": b, "gamma": gamma, "alpha_grid": grid, "rows": rows }))
}

fn elicit_preview(query: &str) -> Reply {
    let q = query_map(query);
    let need = |k: &str| -> Result<f64, ApiError> {
        query_num(&q, k)?.ok_or_else(|| ApiError::malformed(format!("`{k}` is required")))
    };
    let (zeta, xi) = (need("zeta")?, need("xi")?);
    let b: u64 = query_num(&q, "b")?.ok_or_else(|| ApiError::malformed("`b` is required"))?;
    let e = elicit(zeta, xi, b)?;
    let note = match e.adjustment {
        None => None,
        Some(Adjustment::AlphaClamped { raw, clamped }) => Some(format!("alpha {raw} clamped to {clamped}")),
        Some(Adjustment::FlatFallback { gamma }) => {
            Some(format!("{gamma} pseudo-observations; using the flat prior"))
        }
    };
    let PriorSpec { alpha, beta, .. } = e.prior;
    ok_json(json!({ "alpha": alpha, "beta": beta, "gamma": e.gamma, "adjustment": note }))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

fn ui_file(state: &State, segments: &[&str]) -> Reply {
    let missing = || {
        ApiError::new(
            404,
            "ui_not_built",
            "the elicitation UI bundle is not available; build it and start the server with --ui-dir <bundle>, \
             the JSON API works without it",
        )
    };
    let dir = state.ui_dir.as_ref().filter(|d| d.is_dir()).ok_or_else(missing)?;
    let rel: PathBuf = if segments.is_empty() { PathBuf::from("index.html") } else { segments.iter().collect() };
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::not_found("no such file"));
    }
    let path = dir.join(rel);
    match std::fs::read(&path) {
        Ok(bytes) => Ok(Body::Text(200, content_type(&path), bytes)),
        Err(_) if segments.is_empty() => Err(missing()),
        Err(_) => Err(ApiError::not_found(format!("no file '{}'", segments.join("/")))),
    }
}

//! Local HTTP/JSON service over one project file.
//!
//! Every response body carries the project's state fingerprint. Mutations go
//! through `POST /api/ledger` only; the client sends the fingerprint it last
//! saw and the request is refused with 409 when the project moved on since.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::CorsLayer;

use citehist_core::citegraph::{
    bibliographic_coupling, louvain, shortest_paths_by_id, CouplingMode, CouplingOptions, DEFAULT_SHORTEST_CAP,
};
use citehist_core::disambig::{apply_decision, timestamp_now, Applied, ClusterStatus, Decision, DecisionKind};
use citehist_core::io::{load_project_file, save_project_file, ProjectFile, ProjectLock};
use citehist_core::pipeline::Analysis;
use citehist_core::rpys::{multi_rpys, Segmentation, YearRange};
use citehist_core::Error as CoreError;

const LOCK_OWNER: &str = "api";
const TOP_PER_YEAR: usize = 10;

struct Snapshot {
    project: ProjectFile,
    analysis: Arc<Analysis>,
    /// Rendered GET bodies for the current fingerprint, keyed by path and query.
    cache: HashMap<String, Arc<Value>>,
}

pub struct AppState {
    path: PathBuf,
    snapshot: RwLock<Snapshot>,
    writer: Mutex<()>,
}

impl AppState {
    pub fn open(path: &Path) -> citehist_core::Result<Self> {
        let project = load_project_file(path)?;
        let analysis = Arc::new(Analysis::from_project(&project)?);
        Ok(AppState {
            path: path.to_path_buf(),
            snapshot: RwLock::new(Snapshot { project, analysis, cache: HashMap::new() }),
            writer: Mutex::new(()),
        })
    }

    pub async fn fingerprint(&self) -> String {
        self.snapshot.read().await.analysis.fingerprint.clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    fingerprint: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), fingerprint: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn with_fingerprint(mut self, fp: &str) -> Self {
        self.fingerprint = Some(fp.to_string());
        self
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::UnknownNode(_) => StatusCode::NOT_FOUND,
            CoreError::Io(_) | CoreError::Csv(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "fingerprint": self.fingerprint }))).into_response()
    }
}

type ApiResult = Result<Json<Arc<Value>>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/summary", get(summary))
        .route("/api/clusters", get(clusters))
        .route("/api/ledger", post(post_ledger))
        .route("/api/rpys", get(rpys))
        .route("/api/multirpys", get(multirpys))
        .route("/api/graph", get(graph))
        .route("/api/mainpath", get(mainpath))
        .route("/api/shortest", get(shortest))
        .route("/api/top", get(top))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serve the API, plus static files from `static_dir` at `/` when given.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let mut app = router(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    axum::serve(listener, app).await
}

/// Look up a rendered body in the cache or compute it from the current analysis.
async fn cached<F>(state: &AppState, key: String, compute: F) -> ApiResult
where
    F: FnOnce(&Analysis) -> Result<Value, ApiError>,
{
    {
        let snap = state.snapshot.read().await;
        if let Some(v) = snap.cache.get(&key) {
            return Ok(Json(v.clone()));
        }
    }
    let (analysis, fp) = {
        let snap = state.snapshot.read().await;
        (snap.analysis.clone(), snap.analysis.fingerprint.clone())
    };
    let mut body = compute(&analysis).map_err(|e| e.with_fingerprint(&fp))?;
    body["fingerprint"] = Value::String(fp.clone());
    let body = Arc::new(body);
    let mut snap = state.snapshot.write().await;
    if snap.analysis.fingerprint == fp {
        snap.cache.insert(key, body.clone());
    }
    Ok(Json(body))
}

fn cache_key(path: &str, q: &BTreeMap<String, String>) -> String {
    let mut key = path.to_string();
    for (k, v) in q {
        key.push_str(&format!("&{k}={v}"));
    }
    key
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable response")
}

async fn summary(State(state): State<Arc<AppState>>) -> ApiResult {
    cached(&state, "summary".into(), |a| {
        let profile = a.corpus.yearly_profile(&a.edges.edges);
        let variant_clusters = a.clusters.clusters.iter().filter(|c| c.members.len() > 1).count();
        Ok(json!({
            "records": a.corpus.len(),
            "refs": a.corpus.all_refs().count(),
            "clusters": a.clusters.clusters.len(),
            "variant_clusters": variant_clusters,
            "candidates": a.clusters.candidates.len(),
            "citation_edges": a.edges.edges.len(),
            "summary": to_value(&profile.summary),
            "replay_diagnostics": a.replay.iter().map(|d| d.message.clone()).collect::<Vec<_>>(),
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ClusterQuery {
    status: Option<String>,
    min_size: Option<String>,
}

async fn clusters(State(state): State<Arc<AppState>>, Query(q): Query<ClusterQuery>) -> ApiResult {
    let status: Option<ClusterStatus> = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse().map_err(|e: CoreError| ApiError::bad_request(e.to_string()))?),
        None => None,
    };
    let min_size: usize = parse_opt(q.min_size.as_deref(), "min_size")?.unwrap_or(1);
    let key = format!("clusters&status={status:?}&min_size={min_size}");
    cached(&state, key, move |a| {
        let list: Vec<Value> = a
            .clusters
            .clusters
            .iter()
            .filter(|c| status.is_none_or(|s| c.status == s) && c.members.len() >= min_size)
            .map(|c| {
                let mut v = to_value(c);
                v["total"] = json!(c.total());
                v
            })
            .collect();
        Ok(json!({ "clusters": list, "candidates": to_value(&a.clusters.candidates) }))
    })
    .await
}

fn parse_opt<T: std::str::FromStr>(raw: Option<&str>, name: &str) -> Result<Option<T>, ApiError> {
    match raw.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("invalid {name}: {s:?}"))),
    }
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    range: Option<String>,
}

async fn rpys(State(state): State<Arc<AppState>>, Query(q): Query<RangeQuery>) -> ApiResult {
    let range: Option<YearRange> = match q.range.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse().map_err(|e: CoreError| ApiError::bad_request(e.to_string()))?),
        None => None,
    };
    let key = format!("rpys&range={range:?}");
    cached(&state, key, move |a| {
        let range = match range {
            Some(r) => Some(r),
            None => a.rpy_range()?,
        };
        let (spec, dev) = a.spectrum(range)?;
        let identity = a.identity();
        let mut per_year: BTreeMap<i32, BTreeMap<String, u64>> = BTreeMap::new();
        for r in a.corpus.all_refs() {
            if let Some(y) = r.ref_year.filter(|&y| spec.range.contains(y)) {
                *per_year.entry(y).or_default().entry(identity.canonical(&r.raw).to_string()).or_insert(0) += 1;
            }
        }
        let years: Vec<Value> = spec
            .range
            .years()
            .enumerate()
            .map(|(i, y)| {
                let mut top: Vec<(String, u64)> = per_year.remove(&y).unwrap_or_default().into_iter().collect();
                top.sort_by(|x, z| z.1.cmp(&x.1).then_with(|| x.0.cmp(&z.0)));
                top.truncate(TOP_PER_YEAR);
                json!({
                    "year": y,
                    "count": spec.counts[i],
                    "median": dev.medians[i],
                    "deviation": dev.deviations[i],
                    "top": top.into_iter().map(|(reference, count)| json!({"reference": reference, "count": count})).collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(json!({
            "range": spec.range.to_string(),
            "undated": spec.undated,
            "out_of_range": spec.out_of_range,
            "years": years,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct SegmentQuery {
    segments: Option<String>,
    range: Option<String>,
}

async fn multirpys(State(state): State<Arc<AppState>>, Query(q): Query<SegmentQuery>) -> ApiResult {
    let seg: Option<Segmentation> = match q.segments.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse().map_err(|e: CoreError| ApiError::bad_request(e.to_string()))?),
        None => None,
    };
    let range: Option<YearRange> = match q.range.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse().map_err(|e: CoreError| ApiError::bad_request(e.to_string()))?),
        None => None,
    };
    let key = format!("multirpys&segments={seg:?}&range={range:?}");
    cached(&state, key, move |a| {
        let seg = match seg {
            Some(s) => s,
            None => a.segmentation()?,
        };
        let range = match range {
            Some(r) => Some(r),
            None => a.rpy_range()?,
        };
        let h = multi_rpys(&a.corpus, &seg, range)?;
        let mut v = to_value(&h);
        v["segmentation"] = Value::String(seg.to_string());
        Ok(v)
    })
    .await
}

#[derive(Debug, Deserialize)]
struct GraphQuery {
    view: Option<String>,
}

async fn graph(State(state): State<Arc<AppState>>, Query(q): Query<GraphQuery>) -> ApiResult {
    let view = q.view.unwrap_or_else(|| "citation".into());
    match view.as_str() {
        "citation" => cached(&state, "graph&citation".into(), citation_view).await,
        "coupling" => cached(&state, "graph&coupling".into(), coupling_view).await,
        other => Err(ApiError::bad_request(format!("unknown view {other:?}; expected citation or coupling"))),
    }
}

fn citation_view(a: &Analysis) -> Result<Value, ApiError> {
    let g = a.graph();
    let lcs = a.corpus.local_citation_scores(&a.edges.edges);
    let part = a.communities();
    let mp = a.main_paths()?;
    let on_path: std::collections::BTreeSet<(String, String)> = mp
        .paths
        .iter()
        .flat_map(|p| p.arcs.iter().map(|arc| (g.nodes[arc.to].id.clone(), g.nodes[arc.from].id.clone())))
        .collect();
    let nodes: Vec<Value> = a
        .corpus
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "id": r.id,
                "label": r.label(),
                "year": r.pub_year,
                "lcs": lcs[i],
                "gcs": r.times_cited_global,
                "community": part.assignment[i],
            })
        })
        .collect();
    let links: Vec<Value> = g
        .arcs
        .iter()
        .map(|arc| {
            let (s, t) = (&g.nodes[arc.citing].id, &g.nodes[arc.cited].id);
            json!({
                "source": s,
                "target": t,
                "weight": arc.weight,
                "main_path": on_path.contains(&(s.clone(), t.clone())),
            })
        })
        .collect();
    Ok(json!({ "view": "citation", "nodes": nodes, "links": links, "communities": part.communities, "modularity": part.q }))
}

fn coupling_view(a: &Analysis) -> Result<Value, ApiError> {
    let c = bibliographic_coupling(CouplingMode::Document, &a.corpus, &a.identity(), &CouplingOptions::default());
    let part = louvain(&c.to_graph(), a.settings.seed, a.settings.resolution);
    let nodes: Vec<Value> = c
        .entities
        .iter()
        .zip(&c.ref_counts)
        .zip(&part.assignment)
        .map(|((id, n), comm)| json!({ "id": id, "refs": n, "community": comm }))
        .collect();
    let links: Vec<Value> = c
        .edges
        .iter()
        .map(|e| json!({ "source": c.entities[e.a], "target": c.entities[e.b], "shared": e.shared, "cosine": e.cosine }))
        .collect();
    Ok(json!({ "view": "coupling", "nodes": nodes, "links": links, "communities": part.communities, "modularity": part.q }))
}

async fn mainpath(State(state): State<Arc<AppState>>) -> ApiResult {
    cached(&state, "mainpath".into(), |a| {
        let mp = a.main_paths()?;
        let paths: Vec<Value> = mp
            .paths
            .iter()
            .map(|p| {
                json!({
                    "ids": p.ids,
                    "arcs": p.arcs.iter().map(|arc| json!({
                        "from": mp.dag.nodes[arc.from].id,
                        "to": mp.dag.nodes[arc.to].id,
                        "spc": arc.spc.to_string(),
                    })).collect::<Vec<_>>(),
                    "total_weight": p.total_weight.to_string(),
                })
            })
            .collect();
        Ok(json!({
            "paths": paths,
            "total_paths": mp.weights.total_paths.to_string(),
            "removed_arcs": to_value(&mp.removed),
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ShortestQuery {
    from: Option<String>,
    to: Option<String>,
}

async fn shortest(State(state): State<Arc<AppState>>, Query(q): Query<ShortestQuery>) -> ApiResult {
    let (Some(from), Some(to)) = (q.from, q.to) else {
        return Err(ApiError::bad_request("both from and to are required"));
    };
    let key = cache_key("shortest", &BTreeMap::from([("from".into(), from.clone()), ("to".into(), to.clone())]));
    cached(&state, key, move |a| {
        let paths = shortest_paths_by_id(&a.graph(), &from, &to, DEFAULT_SHORTEST_CAP)?;
        Ok(json!({ "from": from, "to": to, "paths": paths }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct TopQuery {
    min_count: Option<String>,
    reviewed_only: Option<String>,
}

async fn top(State(state): State<Arc<AppState>>, Query(q): Query<TopQuery>) -> ApiResult {
    let min_count: Option<u64> = parse_opt(q.min_count.as_deref(), "min_count")?;
    let reviewed_only: bool = parse_opt(q.reviewed_only.as_deref(), "reviewed_only")?.unwrap_or(false);
    let key = format!("top&min_count={min_count:?}&reviewed_only={reviewed_only}");
    cached(&state, key, move |a| {
        let rows = a.top_referenced(min_count.unwrap_or(a.settings.min_count), reviewed_only);
        Ok(json!({ "rows": to_value(&rows) }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    kind: DecisionKind,
    operands: Vec<String>,
    #[serde(default)]
    actor: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LedgerPost {
    fingerprint: String,
    decision: DecisionBody,
}

/// Validate, apply and durably append one decision. The project file is
/// rewritten (fsync, rename) before the response is sent.
async fn post_ledger(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let post: LedgerPost =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed decision: {e}")))?;
    let _writer = state.writer.lock().await;
    let current = state.fingerprint().await;

    let lock = match ProjectLock::acquire(&state.path, LOCK_OWNER) {
        Ok(l) => l,
        Err(e) => return Err(ApiError::new(StatusCode::LOCKED, e.to_string()).with_fingerprint(&current)),
    };
    if post.fingerprint != current {
        return Err(ApiError::new(StatusCode::CONFLICT, "stale fingerprint; reload and retry").with_fingerprint(&current));
    }
    let decision = Decision {
        kind: post.decision.kind,
        operands: post.decision.operands,
        actor: post.decision.actor.unwrap_or_else(|| "webui".into()),
        timestamp: timestamp_now(),
    };
    decision
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()).with_fingerprint(&current))?;

    let (mut project, analysis) = {
        let snap = state.snapshot.read().await;
        (snap.project.clone(), snap.analysis.clone())
    };
    let (_, applied) = apply_decision(&analysis.clusters, &decision);
    let touched = match applied {
        Applied::UnknownOperand(op) => {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown cluster or reference {op:?}"))
                .with_fingerprint(&current))
        }
        Applied::Changed(ids) => ids,
    };
    project.ledger.push(decision);
    let next = Analysis::from_project(&project)?;
    save_project_file(&project, &state.path)?;
    drop(lock);

    let changed: Vec<Value> = next
        .clusters
        .clusters
        .iter()
        .filter(|c| touched.contains(&c.cluster_id))
        .map(|c| {
            let mut v = to_value(c);
            v["total"] = json!(c.total());
            v
        })
        .collect();
    let fp = next.fingerprint.clone();
    {
        let mut snap = state.snapshot.write().await;
        *snap = Snapshot { project, analysis: Arc::new(next), cache: HashMap::new() };
    }
    Ok((StatusCode::OK, Json(json!({ "fingerprint": fp, "clusters": changed }))).into_response())
}

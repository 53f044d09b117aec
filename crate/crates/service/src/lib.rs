//! Read-only HTTP API over one checkpoint and its embedded corpus.
//!
//! | endpoint | query parameters | body |
//! |---|---|---|
//! | `GET /items` | `split`, `class`, `limit` (default 100), `offset` | [`ItemsResponse`]; `X-Total-Count` holds the filtered count |
//! | `GET /retrieve` | `query_id`, `direction`, `alpha` (0.5), `k` (10) | [`RetrieveResponse`] |
//! | `GET /sweep` | `protocol` (`ssl` or `genre`), `direction` (`mean`) | [`SweepResponse`] |
//! | `GET /meta` | | [`MetaResponse`] |
//!
//! Errors are `{"error": "..."}` with status 400 (bad parameter) or 404
//! (unknown item id). Scores are rounded to 6 decimals for transport only;
//! ranking happens at full precision.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use mvr_core::checkpoint::{Checkpoint, CheckpointMeta};
use mvr_core::data::{Dataset, Split};
use mvr_core::retrieval::{
    alpha_grid, alpha_sweep, embed_rows, rank, EmbeddedCorpus, EvalOptions, Protocol, RetrievalQuery, RetrievalReport,
    SeriesDirection,
};
use mvr_core::{Direction, Error};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const DEFAULT_LIMIT: usize = 100;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.5;
/// K of the plotted sweep metrics (R@10 and P@10).
pub const SWEEP_K: usize = 10;

/// Everything the endpoints read. Built once; never mutated afterwards.
#[derive(Debug)]
pub struct ServiceState {
    pub corpus: EmbeddedCorpus<f64>,
    /// Split of each corpus row.
    pub splits: Vec<Split>,
    pub meta: CheckpointMeta,
    pub audio_dim: usize,
    pub audio_layers: usize,
    pub video_dim: usize,
    pub sweep: RetrievalReport,
}

impl ServiceState {
    /// Embeds the items of `split` (all items when `None`) and precomputes
    /// the α sweep over them.
    pub fn build(checkpoint: &Checkpoint<f64>, data: &Dataset, split: Option<Split>) -> mvr_core::Result<Self> {
        let rows: Vec<usize> = match split {
            Some(s) => data.manifest.split_rows(s),
            None => (0..data.len()).collect(),
        };
        if rows.is_empty() {
            return Err(Error::Config("no items to serve".into()));
        }
        let corpus = embed_rows(&checkpoint.params, data, &rows, checkpoint.alpha())?;
        let options = EvalOptions {
            ks: vec![1, SWEEP_K],
            ..EvalOptions::default()
        };
        let sweep = alpha_sweep(&corpus, &alpha_grid(), &Protocol::BOTH, &options)?;
        let h = &data.manifest.header;
        Ok(Self {
            splits: rows.iter().map(|&r| data.manifest.items[r].split).collect(),
            corpus,
            meta: checkpoint.meta.clone(),
            audio_dim: h.audio_dim,
            audio_layers: h.audio_layers,
            video_dim: h.video_dim,
            sweep,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemEntry {
    pub id: String,
    pub genre: String,
    pub genre_id: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemsResponse {
    /// Matching items before `offset` and `limit`.
    pub total: usize,
    pub offset: usize,
    pub items: Vec<ItemEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub id: String,
    pub score: f64,
    pub genre: String,
    pub same_pair: bool,
    pub same_genre: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrieveResponse {
    pub query_id: String,
    pub query_genre: String,
    pub direction: Direction,
    pub alpha: f64,
    pub k: usize,
    pub results: Vec<RankedEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub protocol: Protocol,
    pub metric: String,
    pub direction: SeriesDirection,
    pub points: Vec<SweepPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub audio_dim: usize,
    pub audio_layers: usize,
    pub video_dim: usize,
    pub embed_dim: usize,
    pub class_names: Vec<String>,
    pub training_alpha: f64,
    pub seed: u64,
    pub epoch: usize,
    pub corpus_size: usize,
    pub checkpoint: CheckpointMeta,
}

/// Score as sent over the wire.
pub fn transport_score(score: f64) -> f64 {
    (score * 1e6).round() / 1e6
}

/// Ranked, annotated results for one query; shared by the HTTP endpoint and
/// the command line.
pub fn retrieve(corpus: &EmbeddedCorpus<f64>, query: &RetrievalQuery) -> mvr_core::Result<RetrieveResponse> {
    let q = corpus.row_of(&query.query_id)?;
    let label = corpus.labels[q];
    let results = rank(corpus, query)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| RankedEntry {
            rank: i + 1,
            score: transport_score(r.score),
            genre: corpus.class_names[corpus.labels[r.row]].clone(),
            same_pair: r.row == q,
            same_genre: corpus.labels[r.row] == label,
            id: r.id,
        })
        .collect();
    Ok(RetrieveResponse {
        query_id: query.query_id.clone(),
        query_genre: corpus.class_names[label].clone(),
        direction: query.direction,
        alpha: query.alpha,
        k: query.k,
        results,
    })
}

/// One plotted series of a sweep report at K = 10.
pub fn sweep_series(
    report: &RetrievalReport,
    protocol: Protocol,
    direction: SeriesDirection,
) -> mvr_core::Result<SweepResponse> {
    let s = report.series(protocol, SWEEP_K, direction)?;
    Ok(SweepResponse {
        protocol,
        metric: s.metric,
        direction,
        points: s.points.into_iter().map(|(alpha, value)| SweepPoint { alpha, value }).collect(),
    })
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Lookup(_) => StatusCode::NOT_FOUND,
            Error::Parameter(_) | Error::Config(_) | Error::Protocol(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type Params = Query<HashMap<String, String>>;

fn parse<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str, default: T) -> Result<T, ApiError> {
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw.parse().map_err(|_| ApiError::bad(format!("invalid {key} {raw:?}"))),
    }
}

async fn items(State(state): State<Arc<ServiceState>>, Query(params): Params) -> Result<Response, ApiError> {
    let c = &state.corpus;
    let split = params.get("split").map(|s| s.parse::<Split>()).transpose()?;
    let class = match params.get("class") {
        None => None,
        Some(name) => Some(
            c.class_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ApiError::bad(format!("unknown class {name:?}")))?,
        ),
    };
    let limit = parse(&params, "limit", DEFAULT_LIMIT)?;
    let offset = parse(&params, "offset", 0usize)?;
    let matching: Vec<usize> = (0..c.len())
        .filter(|&r| split.is_none_or(|s| state.splits[r] == s) && class.is_none_or(|y| c.labels[r] == y))
        .collect();
    let body = ItemsResponse {
        total: matching.len(),
        offset,
        items: matching
            .iter()
            .skip(offset)
            .take(limit)
            .map(|&r| ItemEntry {
                id: c.ids[r].clone(),
                genre: c.class_names[c.labels[r]].clone(),
                genre_id: c.labels[r],
                split: state.splits[r],
            })
            .collect(),
    };
    let total = HeaderValue::from(body.total);
    Ok(([(HeaderName::from_static("x-total-count"), total)], Json(body)).into_response())
}

async fn retrieve_handler(
    State(state): State<Arc<ServiceState>>,
    Query(params): Params,
) -> Result<Json<RetrieveResponse>, ApiError> {
    let query_id = params
        .get("query_id")
        .cloned()
        .ok_or_else(|| ApiError::bad("query_id is required"))?;
    let direction = match params.get("direction") {
        None => Direction::VideoToAudio,
        Some(d) => d.parse().map_err(|_| ApiError::bad(format!("unknown direction {d:?}")))?,
    };
    let query = RetrievalQuery {
        query_id,
        direction,
        alpha: parse(&params, "alpha", DEFAULT_ALPHA)?,
        k: parse(&params, "k", DEFAULT_K)?,
    };
    Ok(Json(retrieve(&state.corpus, &query)?))
}

async fn sweep(State(state): State<Arc<ServiceState>>, Query(params): Params) -> Result<Json<SweepResponse>, ApiError> {
    let protocol: Protocol = params
        .get("protocol")
        .ok_or_else(|| ApiError::bad("protocol is required"))?
        .parse()?;
    let direction = match params.get("direction") {
        None => SeriesDirection::Mean,
        Some(d) => d.parse().map_err(|_| ApiError::bad(format!("unknown direction {d:?}")))?,
    };
    Ok(Json(sweep_series(&state.sweep, protocol, direction)?))
}

async fn meta(State(state): State<Arc<ServiceState>>) -> Json<MetaResponse> {
    let m = &state.meta;
    Json(MetaResponse {
        audio_dim: state.audio_dim,
        audio_layers: state.audio_layers,
        video_dim: state.video_dim,
        embed_dim: m.model.embed_dim,
        class_names: state.corpus.class_names.clone(),
        training_alpha: m.train.train_alpha,
        seed: m.train.seed,
        epoch: m.epoch,
        corpus_size: state.corpus.len(),
        checkpoint: m.clone(),
    })
}

/// The API router. `allowed_origin` restricts CORS to one origin; `None`
/// allows any.
pub fn router(state: Arc<ServiceState>, allowed_origin: Option<HeaderValue>) -> Router {
    let origin = match allowed_origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    Router::new()
        .route("/items", get(items))
        .route("/retrieve", get(retrieve_handler))
        .route("/sweep", get(sweep))
        .route("/meta", get(meta))
        .layer(CorsLayer::new().allow_origin(origin).allow_methods([axum::http::Method::GET]))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr, allowed_origin: Option<HeaderValue>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, allowed_origin)).await
}

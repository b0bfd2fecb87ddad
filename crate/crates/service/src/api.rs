use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use triage_core::corpus::{Acceptance, Instance};
use triage_core::explain::{
    embed_instance, explain_instance, project_query, ExplanationBundle, MapPoint, ProjectionMethod, QueryPoint,
};
use triage_core::strategy::{infer, Strategy, StrategyResult, VoteRecord};
use triage_core::TeamLabel;

use crate::error::ApiError;
use crate::state::{AppState, Artifacts};

pub const API_SCHEMA_VERSION: u32 = 1;
const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 500;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/map", get(map))
        .route("/v1/triage", post(triage))
        .route("/v1/instances", get(list_instances))
        .route("/v1/instances/{id}", get(get_instance))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

fn artifacts(state: &AppState) -> Result<&Artifacts, ApiError> {
    state.artifacts().ok_or_else(|| ApiError::unavailable("model not loaded"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub strategy: Strategy,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub models: Vec<ModelInfo>,
    pub map_available: bool,
    pub corpus_instances: usize,
    pub uptime_seconds: f64,
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let loaded = state.artifacts();
    let body = Health {
        status: if loaded.is_some() { "ok" } else { "loading" }.into(),
        models: loaded
            .map(|a| a.models.iter().map(|m| ModelInfo { strategy: m.strategy, hash: m.hash.clone() }).collect())
            .unwrap_or_default(),
        map_available: loaded.is_some_and(|a| a.map.is_some()),
        corpus_instances: state.corpus.len(),
        uptime_seconds: state.started.elapsed().as_secs_f64(),
    };
    let status = if loaded.is_some() { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (status, Json(body)).into_response()
}

/// Map payload: the projection without its out-of-sample projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapView {
    pub schema_version: u32,
    pub method: ProjectionMethod,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<TeamLabel>,
    pub points: Vec<MapPoint>,
}

#[derive(Debug, Deserialize)]
struct MapQuery {
    label: Option<String>,
}

async fn map(
    State(state): State<Arc<AppState>>,
    query: Result<Query<MapQuery>, QueryRejection>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let map = artifacts(&state)?.map.as_ref().ok_or_else(|| ApiError::unavailable("projection not available"))?;
    let label = query.label.map(|l| l.parse::<TeamLabel>()).transpose().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let view = MapView {
        schema_version: map.schema_version,
        method: map.method,
        seed: map.seed,
        iterations: map.iterations,
        perplexity: map.perplexity,
        kl_final: map.kl_final,
        label,
        points: map.points.iter().filter(|p| label.is_none_or(|l| p.team == l)).cloned().collect(),
    };
    let body = serde_json::to_vec(&view).map_err(|e| ApiError::internal(e.to_string()))?;
    let etag = format!("\"{}\"", hex::encode(Sha256::digest(&body)));
    let etag_value = HeaderValue::from_str(&etag).expect("hex etag is a valid header");
    if headers.get(header::IF_NONE_MATCH).is_some_and(|v| v.as_bytes() == etag.as_bytes()) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag_value)]).into_response());
    }
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json")), (header::ETAG, etag_value)],
        body,
    )
        .into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<Instance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub excluded_doc_ids: Vec<String>,
    /// Team whose attention the explanation shows; the predicted team when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<TeamLabel>,
}

fn default_strategy() -> Strategy {
    Strategy::SegmentBatch
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageResponse {
    pub schema_version: u32,
    pub instance_id: String,
    pub model_hash: String,
    pub excluded_doc_ids: Vec<String>,
    pub recommendation: StrategyResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<ExplanationBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<VoteRecord>,
    /// Where the instance lands on the population map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_point: Option<QueryPoint>,
    pub warnings: Vec<String>,
}

async fn triage(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<TriageResponse>, ApiError> {
    let request: TriageRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))?;
    let instance = match (request.instance.clone(), request.instance_id.as_deref()) {
        (Some(inst), None) => inst,
        (None, Some(id)) => {
            state.instance(id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown instance_id {id:?}")))?
        }
        _ => return Err(ApiError::bad_request("give exactly one of instance and instance_id")),
    };
    let state = state.clone();
    tokio::task::spawn_blocking(move || score(&state, instance, &request))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

/// Removes excluded documents, keeping the original order.
pub fn apply_exclusions(mut instance: Instance, excluded: &[String]) -> Result<Instance, ApiError> {
    if let Some(unknown) = excluded.iter().find(|id| !instance.documents.iter().any(|d| &d.doc_id == *id)) {
        return Err(ApiError::unprocessable(format!("unknown excluded doc id {unknown:?}")));
    }
    let had_documents = !instance.documents.is_empty();
    instance.documents.retain(|d| !excluded.contains(&d.doc_id));
    if had_documents && instance.documents.is_empty() {
        return Err(ApiError::unprocessable("no documents remain"));
    }
    Ok(instance)
}

fn score(state: &AppState, instance: Instance, request: &TriageRequest) -> Result<TriageResponse, ApiError> {
    let artifacts = artifacts(state)?;
    let served = artifacts
        .model(request.strategy)
        .ok_or_else(|| ApiError::unavailable(format!("no model loaded for strategy {}", request.strategy)))?;
    let mut instance = apply_exclusions(instance, &request.excluded_doc_ids)?;
    instance.sort_documents();
    if request.strategy == Strategy::BruteForce && instance.documents.is_empty() {
        return Err(ApiError::unprocessable("no documents to vote on; use concat or segment_batch"));
    }
    let (tok, model, cfg) = (&artifacts.tokenizer, &served.model, &served.strategy_config);

    let (recommendation, explanation, votes, warnings, map_point) = if request.strategy == Strategy::SegmentBatch {
        let bundle = explain_instance(&instance, model, tok, cfg, request.label)?;
        let result = StrategyResult {
            strategy: Strategy::SegmentBatch,
            probabilities: bundle.probabilities.clone(),
            predicted: bundle.predicted,
            votes: None,
            attention_ref: Some("explanation".into()),
        };
        let map_point = match &artifacts.map {
            Some(map) => {
                let (v, _) = embed_instance(&instance, model, tok, cfg)?;
                project_query(map, v.view()).ok()
            }
            None => None,
        };
        let warnings = bundle.warnings.clone();
        (result, Some(bundle), None, warnings, map_point)
    } else {
        let outcome = infer(request.strategy, &instance, model, tok, cfg)?;
        let mut result = outcome.result(None);
        let votes = result.votes.take();
        (result, None, votes, outcome.warnings, None)
    };
    Ok(TriageResponse {
        schema_version: API_SCHEMA_VERSION,
        instance_id: instance.instance_id.clone(),
        model_hash: served.hash.clone(),
        excluded_doc_ids: request.excluded_doc_ids.clone(),
        recommendation,
        explanation,
        votes,
        map_point,
        warnings,
    })
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub instance_id: String,
    pub patient_id: String,
    pub referral_date: String,
    pub acceptance: Acceptance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<TeamLabel>,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<InstanceSummary>,
}

async fn list_instances(
    State(state): State<Arc<AppState>>,
    query: Result<Query<PageQuery>, QueryRejection>,
) -> Result<Json<InstancePage>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit must lie in 1..={MAX_PAGE}")));
    }
    let items = state
        .corpus
        .iter()
        .skip(offset)
        .take(limit)
        .map(|i| InstanceSummary {
            instance_id: i.instance_id.clone(),
            patient_id: i.patient_id.clone(),
            referral_date: i.referral_date.to_string(),
            acceptance: i.acceptance,
            label: i.label,
            documents: i.documents.len(),
        })
        .collect();
    Ok(Json(InstancePage { total: state.corpus.len(), offset, limit, items }))
}

async fn get_instance(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Instance>, ApiError> {
    state.instance(&id).cloned().map(Json).ok_or_else(|| ApiError::not_found(format!("unknown instance_id {id:?}")))
}

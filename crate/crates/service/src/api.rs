//! Request handlers and JSON payloads.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::{Deserialize, Serialize};

use zsl_core::dataset::Dataset;
use zsl_core::diagnostics::{sort_attributes, sorted_breakdown, stacking_order, Side, SortKey};
use zsl_core::model::Metrics;
use zsl_core::steering::{WeightChange, WEIGHT_GUIDANCE_FLOOR};

use crate::error::{ApiError, ApiResult};
use crate::jobs::RetrainJob;
use crate::session::Session;
use crate::AppState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryView {
    pub index: usize,
    pub name: String,
    pub seen: bool,
    pub x: f64,
    pub y: f64,
    pub diag_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverviewPayload {
    pub revision: u64,
    pub attributes: Vec<String>,
    pub categories: Vec<CategoryView>,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsPayload {
    pub revision: u64,
    pub attributes: Vec<String>,
    /// Selected seen categories; columns of the q matrices.
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    pub sort: SortKey,
    /// Rows are attributes.
    pub q_over: Vec<Vec<f64>>,
    pub q_under: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub attribute_order: Vec<usize>,
    pub stacking_order: Vec<String>,
    /// Standardized signature rows of the selected unseen categories.
    pub unseen_signatures: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub class: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPayload {
    pub revision: u64,
    pub attribute: usize,
    pub attribute_name: String,
    pub category: String,
    pub side: Side,
    pub q: f64,
    /// Descending by value.
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsPayload {
    pub revision: u64,
    pub attributes: Vec<String>,
    pub weights: Vec<f64>,
    pub history: Vec<WeightChange>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightUpdate {
    pub attr: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPayload {
    pub revision: u64,
    pub seen: Metrics,
    pub unseen: Option<Metrics>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct DiagnosticsQuery {
    pub seen: Option<String>,
    pub unseen: Option<String>,
    pub sort: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct DecompositionQuery {
    pub attr: Option<String>,
    pub cat: Option<String>,
    pub side: Option<String>,
}

fn class_ref(ds: &Dataset, s: &str) -> ApiResult<usize> {
    if let Ok(c) = ds.class_index(s) {
        return Ok(c);
    }
    match s.parse::<usize>() {
        Ok(c) if c < ds.num_classes() => Ok(c),
        _ => Err(zsl_core::Error::UnknownClass(s.to_string()).into()),
    }
}

fn class_list(ds: &Dataset, list: Option<&str>) -> ApiResult<Vec<usize>> {
    list.unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| class_ref(ds, s))
        .collect()
}

fn attribute_ref(ds: &Dataset, s: &str) -> ApiResult<usize> {
    if let Some(k) = ds.attribute_names().iter().position(|n| n == s) {
        return Ok(k);
    }
    match s.parse::<usize>() {
        Ok(k) if k < ds.num_attributes() => Ok(k),
        _ => Err(ApiError::bad_request(format!("unknown attribute `{s}`"))),
    }
}

fn names(ds: &Dataset, classes: &[usize]) -> Vec<String> {
    classes.iter().map(|&c| ds.class_names()[c].clone()).collect()
}

fn weights_payload(s: &Session) -> WeightsPayload {
    let attrs = s.dataset().attribute_names();
    WeightsPayload {
        revision: s.revision(),
        attributes: attrs.to_vec(),
        weights: s.weights().to_vec(),
        history: s.steering().history().to_vec(),
        warnings: s
            .steering()
            .below_guidance()
            .into_iter()
            .map(|k| {
                format!(
                    "weight of `{}` is {:.2}, below the suggested floor {WEIGHT_GUIDANCE_FLOOR}",
                    attrs[k],
                    s.weights()[k]
                )
            })
            .collect(),
    }
}

pub(crate) fn build_diagnostics(s: &Session, q: &DiagnosticsQuery) -> ApiResult<DiagnosticsPayload> {
    let ds = s.dataset();
    let seen = class_list(ds, q.seen.as_deref())?;
    let unseen = class_list(ds, q.unseen.as_deref())?;
    if let Some(&c) = unseen.iter().find(|&&c| s.split().is_seen(c)) {
        return Err(ApiError::bad_request(format!(
            "`{}` is not an unseen category",
            ds.class_names()[c]
        )));
    }
    let sort: SortKey = q.sort.as_deref().unwrap_or("total").parse()?;
    if sort == SortKey::UnseenSum && unseen.is_empty() {
        return Err(ApiError::bad_request(
            "sort=unseen_sum needs at least one selected unseen category",
        ));
    }
    let summary = s.diagnostics(&seen)?;
    let unseen_signatures: Vec<Vec<f64>> = unseen
        .iter()
        .map(|&c| s.signatures().signature(c).to_vec())
        .collect();
    let rows: Vec<&[f64]> = unseen_signatures.iter().map(Vec::as_slice).collect();
    let ordering = sort_attributes(&summary, sort, (!rows.is_empty()).then_some(rows.as_slice()))?;
    Ok(DiagnosticsPayload {
        revision: s.revision(),
        attributes: ds.attribute_names().to_vec(),
        seen: names(ds, &seen),
        unseen: names(ds, &unseen),
        sort,
        q_over: summary.q_over.to_rows(),
        q_under: summary.q_under.to_rows(),
        counts: summary.per_class_counts.clone(),
        attribute_order: ordering.order,
        stacking_order: names(ds, &stacking_order(&summary)),
        unseen_signatures,
        weights: s.weights().to_vec(),
    })
}

pub(crate) fn build_decomposition(s: &Session, q: &DecompositionQuery) -> ApiResult<DecompositionPayload> {
    let ds = s.dataset();
    let missing = |p: &str| ApiError::bad_request(format!("missing query parameter `{p}`"));
    let k = attribute_ref(ds, q.attr.as_deref().ok_or_else(|| missing("attr"))?)?;
    let c = class_ref(ds, q.cat.as_deref().ok_or_else(|| missing("cat"))?)?;
    let side: Side = q.side.as_deref().ok_or_else(|| missing("side"))?.parse()?;
    let summary = s.diagnostics(&[c])?;
    let cell = summary.breakdown(k, 0).side(side);
    Ok(DecompositionPayload {
        revision: s.revision(),
        attribute: k,
        attribute_name: ds.attribute_names()[k].clone(),
        category: ds.class_names()[c].clone(),
        side,
        q: summary.q(side).get(k, 0),
        contributions: sorted_breakdown(cell)
            .into_iter()
            .map(|(p, value)| Contribution {
                class: ds.class_names()[p].clone(),
                value,
            })
            .collect(),
    })
}

pub(crate) async fn overview(State(app): State<AppState>) -> ApiResult<Json<OverviewPayload>> {
    app.read(|s| {
        let counts = s.split().diag_counts(s.dataset());
        let p = s.projection();
        let categories = s
            .dataset()
            .class_names()
            .iter()
            .enumerate()
            .map(|(c, name)| CategoryView {
                index: c,
                name: name.clone(),
                seen: p.seen_mask[c],
                x: p.coords.get(c, 0),
                y: p.coords.get(c, 1),
                diag_count: counts[c],
            })
            .collect();
        Ok(Json(OverviewPayload {
            revision: s.revision(),
            attributes: s.dataset().attribute_names().to_vec(),
            categories,
            kl: p.kl_history.last().copied().unwrap_or(0.0),
        }))
    })
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(q)| q).map_err(|e| ApiError::bad_request(e.body_text()))
}

pub(crate) async fn diagnostics(
    State(app): State<AppState>,
    q: Result<Query<DiagnosticsQuery>, QueryRejection>,
) -> ApiResult<Json<DiagnosticsPayload>> {
    let q = query(q)?;
    app.read(|s| build_diagnostics(s, &q).map(Json))
}

pub(crate) async fn decomposition(
    State(app): State<AppState>,
    q: Result<Query<DecompositionQuery>, QueryRejection>,
) -> ApiResult<Json<DecompositionPayload>> {
    let q = query(q)?;
    app.read(|s| build_decomposition(s, &q).map(Json))
}

pub(crate) async fn get_weights(State(app): State<AppState>) -> ApiResult<Json<WeightsPayload>> {
    app.read(|s| Ok(Json(weights_payload(s))))
}

pub(crate) async fn post_weights(
    State(app): State<AppState>,
    body: Result<Json<WeightUpdate>, JsonRejection>,
) -> ApiResult<Json<WeightsPayload>> {
    let Json(update) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    app.write(|s| {
        s.adjust_weight(update.attr, update.delta)?;
        Ok(Json(weights_payload(s)))
    })
}

pub(crate) async fn metrics(State(app): State<AppState>) -> ApiResult<Json<MetricsPayload>> {
    app.read(|s| {
        Ok(Json(MetricsPayload {
            revision: s.revision(),
            seen: s.seen_metrics()?,
            unseen: s.unseen_metrics()?,
        }))
    })
}

pub(crate) async fn post_retrain(
    State(app): State<AppState>,
) -> ApiResult<(StatusCode, Json<RetrainJob>)> {
    let job = app.start_retrain()?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

pub(crate) async fn get_retrain(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<RetrainJob>> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::bad_request(format!("job id `{id}` is not an integer")))?;
    app.job(id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no retrain job {id}")))
}

//! Per-attribute misprediction analysis.
//!
//! For a mispredicted instance with mapped point `f = f(x)`, true class `y`
//! and predicted class `ŷ`, the score gap splits over attributes:
//!
//! ```text
//! s(f, z_ŷ) − s(f, z_y) = Σ_k p_k,    p_k = f_k (z_ŷ,k − z_y,k)
//! ```
//!
//! Positive terms are the attributes that pushed the instance to the wrong
//! class. They are summed per (attribute, true class), split by the sign of
//! `f_k` into overprediction (`f_k > 0`) and underprediction (`f_k < 0`)
//! scores, and scaled by `1 / n_y` so classes with different holdout sizes
//! are comparable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SignatureMatrix, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{self, MappingModel};

/// Per-attribute split of a score gap: `p_k = mapped_k (z_pred,k − z_true,k)`.
pub fn attribute_contributions(mapped: &[f64], z_true: &[f64], z_pred: &[f64]) -> Result<Vec<f64>> {
    if mapped.len() != z_true.len() || mapped.len() != z_pred.len() {
        return Err(Error::dims(format!(
            "mapped {} / true {} / predicted {} attributes",
            mapped.len(),
            z_true.len(),
            z_pred.len()
        )));
    }
    Ok(mapped
        .iter()
        .zip(z_true.iter().zip(z_pred))
        .map(|(f, (t, p))| f * (p - t))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MispredictionRecord {
    pub instance: usize,
    pub true_class: usize,
    pub predicted_class: usize,
    pub mapped: Vec<f64>,
    pub contributions: Vec<f64>,
}

/// Predicts every instance over `seen` under weights `w` and records the
/// wrong ones. Contributions are taken against `diag(w)·z`, so each record's
/// contributions sum to the weighted score gap.
pub fn collect_mispredictions(
    model: &MappingModel,
    instances: &[usize],
    seen: &[usize],
    dataset: &Dataset,
    signatures: &SignatureMatrix,
    w: &[f64],
) -> Result<Vec<MispredictionRecord>> {
    if seen.is_empty() {
        return Err(Error::invalid("empty seen class set"));
    }
    model::validate_weights(w)?;
    let scaled = signatures.scaled(w)?;
    let mut records = Vec::new();
    for &i in instances {
        let true_class = dataset.labels()[i];
        if !seen.contains(&true_class) {
            return Err(Error::invalid(format!(
                "diagnostics instance {i} has non-seen label `{}`",
                dataset.class_names()[true_class]
            )));
        }
        let mapped = model.forward(&model::to_f64(dataset.feature_row(i)))?;
        let predicted_class = model::argmax_class(&mapped, seen, &scaled);
        if predicted_class == true_class {
            continue;
        }
        let contributions = attribute_contributions(
            &mapped,
            scaled.signature(true_class),
            scaled.signature(predicted_class),
        )?;
        records.push(MispredictionRecord {
            instance: i,
            true_class,
            predicted_class,
            mapped,
            contributions,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Over,
    Under,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "over" => Ok(Side::Over),
            "under" => Ok(Side::Under),
            other => Err(Error::invalid(format!("side must be over or under, got `{other}`"))),
        }
    }
}

/// False-positive split of one (attribute, category) cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellBreakdown {
    pub over: BTreeMap<usize, f64>,
    pub under: BTreeMap<usize, f64>,
}

impl CellBreakdown {
    pub fn side(&self, side: Side) -> &BTreeMap<usize, f64> {
        match side {
            Side::Over => &self.over,
            Side::Under => &self.under,
        }
    }
}

/// Over/under-prediction scores for a selection of seen categories. Matrix
/// rows are attributes, columns follow `selected_categories`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub q_over: Matrix<f64>,
    pub q_under: Matrix<f64>,
    pub selected_categories: Vec<usize>,
    /// Diagnostics-instance count of each selected category.
    pub per_class_counts: Vec<usize>,
    /// Row-major over (attribute, selected column).
    pub fp_breakdown: Vec<CellBreakdown>,
}

impl DiagnosticsSummary {
    pub fn num_attributes(&self) -> usize {
        self.q_over.rows()
    }

    pub fn column_of(&self, class: usize) -> Option<usize> {
        self.selected_categories.iter().position(|&c| c == class)
    }

    pub fn q(&self, side: Side) -> &Matrix<f64> {
        match side {
            Side::Over => &self.q_over,
            Side::Under => &self.q_under,
        }
    }

    pub fn breakdown(&self, attribute: usize, column: usize) -> &CellBreakdown {
        &self.fp_breakdown[attribute * self.selected_categories.len() + column]
    }
}

/// Sums positive contributions into per-category over/under scores.
/// `class_counts` is indexed by class id.
pub fn aggregate_scores(
    records: &[MispredictionRecord],
    num_attributes: usize,
    selected_categories: &[usize],
    class_counts: &[usize],
) -> Result<DiagnosticsSummary> {
    let cols = selected_categories.len();
    let mut column = BTreeMap::new();
    for (j, &c) in selected_categories.iter().enumerate() {
        if column.insert(c, j).is_some() {
            return Err(Error::invalid(format!("category {c} selected twice")));
        }
        match class_counts.get(c) {
            Some(&n) if n > 0 => {}
            _ => {
                return Err(Error::invalid(format!(
                    "selected category {c} has no diagnostics instances"
                )))
            }
        }
    }
    let mut q_over = Matrix::zeros(num_attributes, cols);
    let mut q_under = Matrix::zeros(num_attributes, cols);
    let mut fp_breakdown = vec![CellBreakdown::default(); num_attributes * cols];

    for r in records {
        let Some(&j) = column.get(&r.true_class) else {
            continue;
        };
        if r.contributions.len() != num_attributes || r.mapped.len() != num_attributes {
            return Err(Error::dims(format!(
                "record for instance {} has {} contributions, expected {num_attributes}",
                r.instance,
                r.contributions.len()
            )));
        }
        let scale = 1.0 / class_counts[r.true_class] as f64;
        for (k, (&p, &f)) in r.contributions.iter().zip(&r.mapped).enumerate() {
            if p <= 0.0 {
                continue;
            }
            let add = p * scale;
            let cell = &mut fp_breakdown[k * cols + j];
            let (q, map) = if f > 0.0 {
                (&mut q_over, &mut cell.over)
            } else if f < 0.0 {
                (&mut q_under, &mut cell.under)
            } else {
                continue;
            };
            q.set(k, j, q.get(k, j) + add);
            *map.entry(r.predicted_class).or_insert(0.0) += add;
        }
    }
    Ok(DiagnosticsSummary {
        q_over,
        q_under,
        selected_categories: selected_categories.to_vec(),
        per_class_counts: selected_categories.iter().map(|&c| class_counts[c]).collect(),
        fp_breakdown,
    })
}

/// Mispredictions on the split's diagnostics holdout, aggregated over
/// `selected` seen categories.
pub fn diagnose(
    model: &MappingModel,
    dataset: &Dataset,
    split: &Split,
    signatures: &SignatureMatrix,
    w: &[f64],
    selected: &[usize],
) -> Result<DiagnosticsSummary> {
    if let Some(&c) = selected.iter().find(|&&c| !split.is_seen(c)) {
        return Err(Error::invalid(format!(
            "`{}` is not a seen category",
            dataset.class_names().get(c).map_or("?", String::as_str)
        )));
    }
    let records = collect_mispredictions(
        model,
        &split.diag_instances,
        &split.seen_classes,
        dataset,
        signatures,
        w,
    )?;
    aggregate_scores(&records, signatures.num_attributes(), selected, &split.diag_counts(dataset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    Under,
    Over,
    Total,
    UnseenSum,
}

impl std::str::FromStr for SortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "under" => Ok(SortKey::Under),
            "over" => Ok(SortKey::Over),
            "total" => Ok(SortKey::Total),
            "unseen_sum" => Ok(SortKey::UnseenSum),
            other => Err(Error::invalid(format!(
                "sort key must be under, over, total or unseen_sum, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeOrdering {
    pub key: SortKey,
    pub order: Vec<usize>,
}

/// Attribute indices sorted descending by `key`; ties keep index order.
/// `unseen_signatures` holds one signature row per selected unseen class.
pub fn sort_attributes(
    summary: &DiagnosticsSummary,
    key: SortKey,
    unseen_signatures: Option<&[&[f64]]>,
) -> Result<AttributeOrdering> {
    let a = summary.num_attributes();
    let row_sum = |m: &Matrix<f64>, k: usize| m.row(k).iter().sum::<f64>();
    let scores: Vec<f64> = match key {
        SortKey::Under => (0..a).map(|k| row_sum(&summary.q_under, k)).collect(),
        SortKey::Over => (0..a).map(|k| row_sum(&summary.q_over, k)).collect(),
        SortKey::Total => (0..a)
            .map(|k| row_sum(&summary.q_under, k) + row_sum(&summary.q_over, k))
            .collect(),
        SortKey::UnseenSum => {
            let rows = unseen_signatures
                .ok_or_else(|| Error::invalid("unseen_sum ordering needs unseen signatures"))?;
            if let Some(r) = rows.iter().find(|r| r.len() != a) {
                return Err(Error::dims(format!(
                    "unseen signature has {} attributes, expected {a}",
                    r.len()
                )));
            }
            (0..a).map(|k| rows.iter().map(|r| r[k]).sum()).collect()
        }
    };
    let mut order: Vec<usize> = (0..a).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    Ok(AttributeOrdering { key, order })
}

/// Category stacking order shared by every attribute row: descending total
/// over + under score across all attributes, ties by class index.
pub fn stacking_order(summary: &DiagnosticsSummary) -> Vec<usize> {
    let totals: Vec<f64> = (0..summary.selected_categories.len())
        .map(|j| {
            (0..summary.num_attributes())
                .map(|k| summary.q_over.get(k, j) + summary.q_under.get(k, j))
                .sum()
        })
        .collect();
    let mut cols: Vec<usize> = (0..totals.len()).collect();
    cols.sort_by(|&i, &j| {
        totals[j]
            .total_cmp(&totals[i])
            .then(summary.selected_categories[i].cmp(&summary.selected_categories[j]))
    });
    cols.into_iter().map(|j| summary.selected_categories[j]).collect()
}

/// JSON export written by `diagnose --out` and mirrored by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsExport {
    pub attributes: Vec<String>,
    pub categories: Vec<String>,
    pub q_over: Vec<Vec<f64>>,
    pub q_under: Vec<Vec<f64>>,
    pub fp_breakdown: Vec<BreakdownEntry>,
    pub counts: Vec<usize>,
    pub orderings: Orderings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownEntry {
    pub attribute: usize,
    pub category: usize,
    pub side: Side,
    /// (predicted class, contribution), descending by contribution.
    pub contributions: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orderings {
    pub under: Vec<usize>,
    pub over: Vec<usize>,
    pub total: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unseen_sum: Option<Vec<usize>>,
    /// Selected category ids in stacking order.
    pub stacking: Vec<usize>,
}

/// Breakdown of one cell as (predicted class, contribution), descending,
/// ties by class index.
pub fn sorted_breakdown(map: &BTreeMap<usize, f64>) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = map.iter().map(|(&c, &x)| (c, x)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

impl DiagnosticsExport {
    /// `category` in breakdown entries is the column into `categories`.
    pub fn build(
        summary: &DiagnosticsSummary,
        dataset: &Dataset,
        unseen_signatures: Option<&[&[f64]]>,
    ) -> Result<Self> {
        let names = dataset.class_names();
        let mut fp_breakdown = Vec::new();
        for k in 0..summary.num_attributes() {
            for j in 0..summary.selected_categories.len() {
                let cell = summary.breakdown(k, j);
                for side in [Side::Over, Side::Under] {
                    let map = cell.side(side);
                    if map.is_empty() {
                        continue;
                    }
                    fp_breakdown.push(BreakdownEntry {
                        attribute: k,
                        category: j,
                        side,
                        contributions: sorted_breakdown(map)
                            .into_iter()
                            .map(|(c, v)| (names[c].clone(), v))
                            .collect(),
                    });
                }
            }
        }
        let order = |key| sort_attributes(summary, key, unseen_signatures).map(|o| o.order);
        Ok(Self {
            attributes: dataset.attribute_names().to_vec(),
            categories: summary
                .selected_categories
                .iter()
                .map(|&c| names[c].clone())
                .collect(),
            q_over: summary.q_over.to_rows(),
            q_under: summary.q_under.to_rows(),
            fp_breakdown,
            counts: summary.per_class_counts.clone(),
            orderings: Orderings {
                under: order(SortKey::Under)?,
                over: order(SortKey::Over)?,
                total: order(SortKey::Total)?,
                unseen_sum: match unseen_signatures {
                    Some(_) => Some(order(SortKey::UnseenSum)?),
                    None => None,
                },
                stacking: stacking_order(summary),
            },
        })
    }
}

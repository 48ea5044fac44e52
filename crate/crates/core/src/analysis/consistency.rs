use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{kl_divergence, rank_correlation, AnalysisError};
use crate::corpus::SuiteKind;
use crate::evaluation::EvalResult;

/// Base-vs-tuned agreement on one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub base_model: String,
    pub tuned_model: String,
    pub suite_kind: SuiteKind,
    /// Mean per-item rank correlation; `None` if every item was excluded.
    pub mean_rank_corr: Option<f64>,
    pub mean_kl: f64,
    pub tuned_accuracy: f64,
    pub base_accuracy: f64,
    pub n_items: usize,
    /// Items whose rank correlation is undefined.
    pub n_excluded: usize,
    /// Free-form grouping labels such as domain, setting and ratio.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

/// Compares a base model's in-context predictions with a tuned model's
/// zero-shot predictions item by item.
pub fn consistency_report(
    base_eval: &EvalResult,
    tuned_eval: &EvalResult,
    epsilon: f64,
) -> Result<ConsistencyReport, AnalysisError> {
    if base_eval.suite_kind != tuned_eval.suite_kind {
        return Err(AnalysisError::SuiteMismatch {
            base: base_eval.suite_kind,
            tuned: tuned_eval.suite_kind,
        });
    }
    let tuned: HashMap<&str, _> = tuned_eval
        .per_item
        .iter()
        .map(|p| (p.item_id.as_str(), p))
        .collect();
    let base_ids: BTreeSet<&str> = base_eval.per_item.iter().map(|p| p.item_id.as_str()).collect();
    let tuned_ids: BTreeSet<&str> = tuned.keys().copied().collect();
    if base_ids != tuned_ids || base_ids.len() != base_eval.per_item.len() {
        let missing: Vec<String> = base_ids
            .symmetric_difference(&tuned_ids)
            .map(|s| s.to_string())
            .collect();
        return Err(AnalysisError::ItemMismatch { missing });
    }

    let mut corr_sum = 0.0;
    let mut n_corr = 0usize;
    let mut kl_sum = 0.0;
    for b in &base_eval.per_item {
        let t = tuned[b.item_id.as_str()];
        if let Some(r) = rank_correlation(&b.probs, &t.probs).map_err(|e| e.for_item(&b.item_id))? {
            corr_sum += r;
            n_corr += 1;
        }
        kl_sum += kl_divergence(&t.probs, &b.probs, epsilon).map_err(|e| e.for_item(&b.item_id))?;
    }
    let n = base_eval.per_item.len();
    Ok(ConsistencyReport {
        base_model: base_eval.model_name.clone(),
        tuned_model: tuned_eval.model_name.clone(),
        suite_kind: base_eval.suite_kind,
        mean_rank_corr: (n_corr > 0).then(|| corr_sum / n_corr as f64),
        mean_kl: if n > 0 { kl_sum / n as f64 } else { 0.0 },
        tuned_accuracy: tuned_eval.accuracy,
        base_accuracy: base_eval.accuracy,
        n_items: n,
        n_excluded: n - n_corr,
        labels: BTreeMap::new(),
    })
}

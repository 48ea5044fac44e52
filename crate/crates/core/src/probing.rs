//! Few-shot probing of a base model's parameter knowledge.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Client};
use crate::choice::{ChoiceDistribution, Letter};
use crate::corpus::{Domain, McqItem};
use crate::prompts::probe_prompt;
use crate::util::parallel_map;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SHOTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    Harmonious,
    Incompatible,
    Uncertain,
}

impl fmt::Display for ProbeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeStatus::Harmonious => "harmonious",
            ProbeStatus::Incompatible => "incompatible",
            ProbeStatus::Uncertain => "uncertain",
        })
    }
}

/// The base model's in-context answer to one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub item_id: String,
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(rename = "probs")]
    pub distribution: ChoiceDistribution,
    pub prediction: Letter,
    pub confidence: f64,
    pub status: ProbeStatus,
}

impl ProbeRecord {
    pub fn new(
        item_id: impl Into<String>,
        model_name: impl Into<String>,
        distribution: ChoiceDistribution,
        gold: Letter,
        threshold: f64,
    ) -> Self {
        let prediction = distribution.argmax();
        let confidence = distribution.probs()[prediction.index()];
        ProbeRecord {
            item_id: item_id.into(),
            model_name: model_name.into(),
            status: classify(prediction, confidence, gold, threshold),
            distribution,
            prediction,
            confidence,
        }
    }
}

pub fn classify(prediction: Letter, confidence: f64, gold: Letter, threshold: f64) -> ProbeStatus {
    if confidence <= threshold {
        ProbeStatus::Uncertain
    } else if prediction == gold {
        ProbeStatus::Harmonious
    } else {
        ProbeStatus::Incompatible
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("demonstration {id} is invalid: {reason}")]
    BadDemo { id: String, reason: String },
    #[error("target item {0} appears among the demonstrations")]
    TargetInDemos(String),
    #[error("item {id}: {source}")]
    Backend {
        id: String,
        #[source]
        source: BackendError,
    },
}

pub fn check_threshold(threshold: f64) -> Result<(), ProbeError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(ProbeError::Threshold(threshold))
    }
}

fn check_demos(demos: &[McqItem]) -> Result<(), ProbeError> {
    for d in demos {
        d.validate().map_err(|v| ProbeError::BadDemo {
            id: d.id.clone(),
            reason: format!("{}: {}", v.field, v.reason),
        })?;
    }
    Ok(())
}

/// Few-shot prompt for `item`; demonstrations keep the given order.
pub fn build_icl_prompt(item: &McqItem, demos: &[McqItem], domain: &Domain) -> Result<String, ProbeError> {
    check_demos(demos)?;
    if demos.iter().any(|d| d.id == item.id) {
        return Err(ProbeError::TargetInDemos(item.id.clone()));
    }
    Ok(probe_prompt(item, demos, domain))
}

pub fn probe_item(
    client: &Client,
    item: &McqItem,
    demos: &[McqItem],
    domain: &Domain,
    threshold: f64,
) -> Result<ProbeRecord, ProbeError> {
    check_threshold(threshold)?;
    let prompt = build_icl_prompt(item, demos, domain)?;
    let dist = client
        .score_choices(&prompt, &item.letters())
        .map_err(|source| ProbeError::Backend {
            id: item.id.clone(),
            source,
        })?;
    Ok(ProbeRecord::new(&item.id, client.model_name(), dist, item.gold, threshold))
}

/// An item that could not be processed, for the error manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub message: String,
}

/// Completed records in input order plus the items that failed.
#[derive(Debug, Clone, Default)]
pub struct ProbeRun {
    pub records: Vec<ProbeRecord>,
    pub failures: Vec<ItemFailure>,
}

impl ProbeRun {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Probes every item with a shared demonstration set. Requests fan out over
/// the client's in-flight bound; finished requests are cached, so a rerun
/// after an interruption only pays for the items that never completed.
pub fn probe_corpus(
    client: &Client,
    items: &[McqItem],
    demos: &[McqItem],
    domain: &Domain,
    threshold: f64,
) -> Result<ProbeRun, ProbeError> {
    check_threshold(threshold)?;
    check_demos(demos)?;
    let results = parallel_map(items, client.max_in_flight(), |_, item| {
        probe_item(client, item, demos, domain, threshold)
    });
    let mut run = ProbeRun::default();
    for (item, r) in items.iter().zip(results) {
        match r {
            Ok(rec) => run.records.push(rec),
            Err(e @ ProbeError::TargetInDemos(_)) => return Err(e),
            Err(e) => {
                tracing::warn!(item = %item.id, error = %e, "probe failed");
                run.failures.push(ItemFailure {
                    item_id: item.id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(run)
}

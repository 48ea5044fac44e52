//! Scoring a model on HOMO / ID / OOD suites.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::Client;
use crate::choice::{ChoiceDistribution, Letter};
use crate::corpus::{EvalSuite, McqItem, SuiteKind};
use crate::probing::ItemFailure;
use crate::prompts::probe_prompt;
use crate::util::{parallel_map, read_jsonl, write_jsonl, JsonlError};

/// Prompting regime. `Icl(0)` and `ZeroShot` render identical prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvalMode {
    ZeroShot,
    Icl(usize),
}

impl EvalMode {
    pub fn shots(self) -> usize {
        match self {
            EvalMode::ZeroShot => 0,
            EvalMode::Icl(k) => k,
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMode::ZeroShot => f.write_str("zero_shot"),
            EvalMode::Icl(k) => write!(f, "icl{k}"),
        }
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "zero_shot" {
            return Ok(EvalMode::ZeroShot);
        }
        s.strip_prefix("icl")
            .and_then(|k| k.parse().ok())
            .map(EvalMode::Icl)
            .ok_or_else(|| format!("unknown evaluation mode {s:?}; expected zero_shot or icl<k>"))
    }
}

/// Prompt for one evaluation item. Demonstrations are the first `shots`
/// of `demos`; the header names the item's own domain.
pub fn eval_prompt(item: &McqItem, demos: &[McqItem], mode: EvalMode) -> String {
    let k = mode.shots().min(demos.len());
    probe_prompt(item, &demos[..k], &item.domain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPrediction {
    pub item_id: String,
    pub probs: ChoiceDistribution,
    pub pred: Letter,
    pub correct: bool,
}

impl ItemPrediction {
    pub fn new(item: &McqItem, probs: ChoiceDistribution) -> Self {
        let pred = probs.argmax();
        ItemPrediction {
            item_id: item.id.clone(),
            correct: pred == item.gold,
            probs,
            pred,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub model_name: String,
    pub suite_kind: SuiteKind,
    pub per_item: Vec<ItemPrediction>,
    pub accuracy: f64,
}

impl EvalResult {
    pub fn new(model_name: impl Into<String>, suite_kind: SuiteKind, per_item: Vec<ItemPrediction>) -> Self {
        let accuracy = accuracy(&per_item);
        EvalResult {
            model_name: model_name.into(),
            suite_kind,
            per_item,
            accuracy,
        }
    }

    pub fn n_correct(&self) -> usize {
        self.per_item.iter().filter(|p| p.correct).count()
    }
}

pub fn accuracy(per_item: &[ItemPrediction]) -> f64 {
    if per_item.is_empty() {
        return 0.0;
    }
    per_item.iter().filter(|p| p.correct).count() as f64 / per_item.len() as f64
}

#[derive(Debug, Clone, Default)]
pub struct EvalRun {
    pub results: Vec<EvalResult>,
    pub failures: Vec<ItemFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("evaluation item {0} is also a demonstration")]
    DemoLeak(String),
    #[error("{mode} needs {needed} demonstrations, {available} given")]
    TooFewDemos {
        mode: EvalMode,
        needed: usize,
        available: usize,
    },
    #[error(transparent)]
    File(#[from] JsonlError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: summary for {model}/{suite} disagrees with its item lines")]
    Summary {
        path: String,
        model: String,
        suite: String,
    },
}

/// Scores every suite kind. Empty kinds are skipped with a warning; item
/// failures are collected rather than aborting the run.
pub fn evaluate(
    client: &Client,
    suite: &EvalSuite,
    mode: EvalMode,
    demos: &[McqItem],
) -> Result<EvalRun, EvalError> {
    if mode.shots() > demos.len() {
        return Err(EvalError::TooFewDemos {
            mode,
            needed: mode.shots(),
            available: demos.len(),
        });
    }
    let demos = &demos[..mode.shots()];
    let mut run = EvalRun::default();
    for kind in SuiteKind::ALL {
        let items = suite.items(kind);
        if items.is_empty() {
            tracing::warn!(suite = %kind, model = client.model_name(), "empty suite; result omitted");
            continue;
        }
        if let Some(it) = items.iter().find(|it| demos.iter().any(|d| d.id == it.id)) {
            return Err(EvalError::DemoLeak(it.id.clone()));
        }
        let scored = parallel_map(items, client.max_in_flight(), |_, item| {
            client.score_choices(&eval_prompt(item, demos, mode), &item.letters())
        });
        let mut per_item = Vec::with_capacity(items.len());
        for (item, r) in items.iter().zip(scored) {
            match r {
                Ok(dist) => per_item.push(ItemPrediction::new(item, dist)),
                Err(e) => {
                    tracing::warn!(item = %item.id, error = %e, "evaluation failed");
                    run.failures.push(ItemFailure {
                        item_id: item.id.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }
        if !per_item.is_empty() {
            run.results.push(EvalResult::new(client.model_name(), kind, per_item));
        }
    }
    Ok(run)
}

#[derive(Serialize, Deserialize)]
struct ItemLine {
    model: String,
    suite: SuiteKind,
    item_id: String,
    probs: ChoiceDistribution,
    pred: Letter,
    correct: bool,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    model: String,
    suite: SuiteKind,
    accuracy: f64,
    n_items: usize,
    n_correct: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Line {
    Item(ItemLine),
    Summary(SummaryLine),
}

/// Item lines of every result followed by one summary line per result.
pub fn write_eval_file(results: &[EvalResult], path: &Path) -> Result<(), EvalError> {
    let mut lines = Vec::new();
    for r in results {
        lines.extend(r.per_item.iter().map(|p| {
            Line::Item(ItemLine {
                model: r.model_name.clone(),
                suite: r.suite_kind,
                item_id: p.item_id.clone(),
                probs: p.probs.clone(),
                pred: p.pred,
                correct: p.correct,
            })
        }));
    }
    lines.extend(results.iter().map(|r| {
        Line::Summary(SummaryLine {
            model: r.model_name.clone(),
            suite: r.suite_kind,
            accuracy: r.accuracy,
            n_items: r.per_item.len(),
            n_correct: r.n_correct(),
        })
    }));
    write_jsonl(path, &lines).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_eval_file(path: &Path) -> Result<Vec<EvalResult>, EvalError> {
    let lines: Vec<Line> = read_jsonl(path)?;
    let mut groups: BTreeMap<(String, SuiteKind), Vec<ItemPrediction>> = BTreeMap::new();
    let mut order = Vec::new();
    let mut summaries = Vec::new();
    for line in lines {
        match line {
            Line::Item(l) => {
                let key = (l.model, l.suite);
                if !groups.contains_key(&key) {
                    order.push(key.clone());
                }
                groups.entry(key).or_default().push(ItemPrediction {
                    item_id: l.item_id,
                    probs: l.probs,
                    pred: l.pred,
                    correct: l.correct,
                });
            }
            Line::Summary(s) => summaries.push(s),
        }
    }
    let results: Vec<EvalResult> = order
        .into_iter()
        .map(|key| {
            let items = groups.remove(&key).expect("grouped");
            EvalResult::new(key.0, key.1, items)
        })
        .collect();
    for s in summaries {
        let ok = results.iter().any(|r| {
            r.model_name == s.model
                && r.suite_kind == s.suite
                && r.per_item.len() == s.n_items
                && r.n_correct() == s.n_correct
        });
        if !ok {
            return Err(EvalError::Summary {
                path: path.display().to_string(),
                model: s.model,
                suite: s.suite.to_string(),
            });
        }
    }
    Ok(results)
}

//! Multiple-choice corpora: ingestion, deterministic splits and evaluation suites.

mod load;
mod split;
mod suite;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::choice::{Letter, MAX_CHOICES, MIN_CHOICES};

pub use load::{
    emit_corpus, load_corpus, load_corpus_with, load_mmlu_csv, load_mmlu_dir, native_lines,
    CorpusFormat, LoadOptions, TaggedItem,
};
pub use split::{split_corpus, CorpusSplit, SplitSizes};
pub use suite::{build_eval_suite, EvalSuite, SubcategorySplits, SuiteKind, MMLU_SUBCATEGORIES};

/// Knowledge domain of an item or a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Medicine,
    History,
    Engineering,
    Jurisprudence,
    Other(String),
}

impl Domain {
    pub fn parse(s: &str) -> Domain {
        match s {
            "medicine" => Domain::Medicine,
            "history" => Domain::History,
            "engineering" => Domain::Engineering,
            "jurisprudence" => Domain::Jurisprudence,
            other => Domain::Other(other.to_string()),
        }
    }

    /// Identifier used in files and configuration.
    pub fn key(&self) -> &str {
        match self {
            Domain::Medicine => "medicine",
            Domain::History => "history",
            Domain::Engineering => "engineering",
            Domain::Jurisprudence => "jurisprudence",
            Domain::Other(name) => name,
        }
    }

    /// Human-readable name substituted into prompt headers.
    pub fn display_name(&self) -> String {
        self.key().replace('_', " ")
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Domain::parse(&String::deserialize(deserializer)?))
    }
}

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McqItem {
    pub id: String,
    pub domain: Domain,
    pub question: String,
    /// Choice texts; position `i` belongs to letter `A + i`.
    pub choices: Vec<String>,
    pub gold: Letter,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("field `{field}`: {reason}")]
pub struct ItemViolation {
    pub field: &'static str,
    pub reason: String,
}

impl McqItem {
    /// Checks the item invariants: 2..=5 non-empty choices, a non-empty
    /// question and a gold letter among the choices.
    pub fn validate(&self) -> Result<(), ItemViolation> {
        if self.id.trim().is_empty() {
            return Err(violation("id", "must be non-empty"));
        }
        if self.question.trim().is_empty() {
            return Err(violation("question", "must be non-empty"));
        }
        if !(MIN_CHOICES..=MAX_CHOICES).contains(&self.choices.len()) {
            return Err(violation(
                "choices",
                format!(
                    "expected {MIN_CHOICES} to {MAX_CHOICES} choices, got {}",
                    self.choices.len()
                ),
            ));
        }
        if let Some(i) = self.choices.iter().position(|c| c.trim().is_empty()) {
            return Err(violation(
                "choices",
                format!("choice {} is empty", Letter::from_index(i).unwrap()),
            ));
        }
        if self.gold.index() >= self.choices.len() {
            return Err(violation(
                "gold",
                format!(
                    "answer {} is not among the {} choices",
                    self.gold,
                    self.choices.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn letters(&self) -> Vec<Letter> {
        Letter::first_n(self.choices.len())
    }

    pub fn choice(&self, letter: Letter) -> Option<&str> {
        self.choices.get(letter.index()).map(String::as_str)
    }

    pub fn has_explanation(&self) -> bool {
        self.explanation
            .as_deref()
            .is_some_and(|e| !e.trim().is_empty())
    }
}

fn violation(field: &'static str, reason: impl Into<String>) -> ItemViolation {
    ItemViolation {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: field `{field}`: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        field: String,
        reason: String,
    },
    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("split needs {needed} items but the corpus has {available}")]
    InsufficientItems { needed: usize, available: usize },
    #[error("subcategory {0:?} is not part of the subcategory universe")]
    UnknownSubcategory(String),
    #[error("subcategory config: {0}")]
    Config(String),
}

#[cfg(test)]
pub(crate) fn test_item(id: &str, domain: Domain, n: usize, gold: char) -> McqItem {
    McqItem {
        id: id.to_string(),
        domain,
        question: format!("Question {id}?"),
        choices: (0..n).map(|i| format!("option {i} of {id}")).collect(),
        gold: Letter::from_char(gold).unwrap(),
        explanation: None,
    }
}

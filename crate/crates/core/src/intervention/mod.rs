//! Instruction-tuning datasets built from probe results: harmonious,
//! incompatible, self-aligning and contextualized settings, consistency-ratio
//! mixes, general-data blending and training file emission.

mod build;
mod emit;
mod explain;
mod mix;
mod partition;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::choice::Letter;

pub use build::{
    build_contextualized, build_harmonious, build_incompatible, build_self_aligning,
    build_setting_dataset, equal_size, example_instruction, subsample,
};
pub use emit::{
    emit_ift_file, load_general, load_pair_file, ChatTemplate, ConversationRecord, IftFormat,
    PairMeta, PairRecord, Turn,
};
pub use explain::{attach_explanation, clean_explanation, Explainer, GenerationConfig};
pub use mix::{blend_general, general_count, mix_counts, mix_ratio, MixSpec};
pub use partition::{partition_by_status, Groups, Probed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Harmonious,
    Incompatible,
    SelfAligning,
    Contextualized,
    General,
}

impl Setting {
    pub fn key(self) -> &'static str {
        match self {
            Setting::Harmonious => "harmonious",
            Setting::Incompatible => "incompatible",
            Setting::SelfAligning => "self_aligning",
            Setting::Contextualized => "contextualized",
            Setting::General => "general",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationOrigin {
    Corpus,
    BaseModel,
    ExternalModel,
    None,
}

/// One instruction/response training pair with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IftExample {
    pub instruction: String,
    pub response: String,
    pub setting: Setting,
    pub source_item_id: Option<String>,
    pub answer_letter: Option<Letter>,
    pub explanation_origin: ExplanationOrigin,
    /// Set when generation was refused or never satisfied its constraints.
    pub flagged: bool,
}

impl IftExample {
    pub fn general(instruction: impl Into<String>, response: impl Into<String>) -> Self {
        IftExample {
            instruction: instruction.into(),
            response: response.into(),
            setting: Setting::General,
            source_item_id: None,
            answer_letter: None,
            explanation_origin: ExplanationOrigin::None,
            flagged: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InterventionError {
    #[error("probe record for unknown item {0}")]
    DanglingItem(String),
    #[error("item {id}: {reason}")]
    Precondition { id: String, reason: String },
    #[error("{setting} group has {available} items, {requested} requested (largest feasible equal size is {feasible})")]
    InsufficientGroup {
        setting: Setting,
        requested: usize,
        available: usize,
        feasible: usize,
    },
    #[error("datasets cannot be paired: {0}")]
    Unpairable(String),
    #[error("invalid mix: {0}")]
    Mix(String),
    #[error("{available} general examples available, {needed} needed")]
    InsufficientGeneral { needed: usize, available: usize },
    #[error("item {id}: generation stayed empty after {attempts} attempts")]
    EmptyGeneration { id: String, attempts: u32 },
    #[error("item {id}: {source}")]
    Backend {
        id: String,
        #[source]
        source: BackendError,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

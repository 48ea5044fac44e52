use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, BackendSpec, GenerateParams, RawCompletion, RawScore, ScoreBody, Transport};
use crate::choice::{ChoiceDistribution, Letter};
use crate::prompts::target_question;
use crate::util::{read_jsonl, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MockScoring {
    #[default]
    Uniform,
    /// Pseudo-random distribution derived from SHA-256 of model, salt and prompt.
    Hashed,
    /// Looked up by the target question of the prompt in `table`.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MockGeneration {
    /// Always the configured `canned` string.
    #[default]
    Canned,
    /// `canned` followed by a short digest of the prompt.
    Digest,
}

/// Deterministic offline backend configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    #[serde(default)]
    pub scoring: MockScoring,
    /// JSONL file of `{"question": ..., "probs": {"A": ..}}` rows for table scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub salt: u64,
    #[serde(default)]
    pub generation: MockGeneration,
    #[serde(default = "default_canned")]
    pub canned: String,
}

fn default_canned() -> String {
    "This follows from the question.".to_string()
}

impl Default for MockSpec {
    fn default() -> Self {
        MockSpec {
            scoring: MockScoring::Uniform,
            table: None,
            salt: 0,
            generation: MockGeneration::Canned,
            canned: default_canned(),
        }
    }
}

#[derive(Deserialize)]
struct TableRow {
    question: String,
    probs: ChoiceDistribution,
}

pub struct MockTransport {
    model_name: String,
    spec: MockSpec,
    table: HashMap<String, ChoiceDistribution>,
}

impl MockTransport {
    pub fn from_spec(spec: &BackendSpec) -> Result<Self, BackendError> {
        let mock = spec.mock.clone().unwrap_or_default();
        let mut table = HashMap::new();
        if mock.scoring == MockScoring::Table {
            let path = mock.table.as_ref().ok_or_else(|| {
                BackendError::Config("table scoring needs mock.table".into())
            })?;
            let rows: Vec<TableRow> =
                read_jsonl(path).map_err(|e| BackendError::Config(e.to_string()))?;
            table = rows.into_iter().map(|r| (r.question, r.probs)).collect();
        }
        Ok(MockTransport {
            model_name: spec.model_name.clone(),
            spec: mock,
            table,
        })
    }

    /// Table-scoring mock over an in-memory question → distribution map.
    pub fn with_table(
        model_name: impl Into<String>,
        table: HashMap<String, ChoiceDistribution>,
    ) -> Self {
        MockTransport {
            model_name: model_name.into(),
            spec: MockSpec {
                scoring: MockScoring::Table,
                ..MockSpec::default()
            },
            table,
        }
    }

    fn hashed(&self, prompt: &str, n: usize) -> Vec<f64> {
        let digest = sha256_hex(format!("{}\u{0}{}\u{0}{}", self.model_name, self.spec.salt, prompt));
        let bytes = hex::decode(digest).expect("hex digest");
        bytes[..n]
            .iter()
            .map(|&b| (f64::from(b) + 1.0).powi(3))
            .collect()
    }
}

impl Transport for MockTransport {
    fn score(&self, prompt: &str, letters: &[Letter], _top_k: u32) -> Result<RawScore, BackendError> {
        let n = letters.iter().map(|l| l.index() + 1).max().unwrap_or(0);
        let full = match self.spec.scoring {
            MockScoring::Uniform => vec![1.0; n],
            MockScoring::Hashed => self.hashed(prompt, n),
            MockScoring::Table => {
                let question = target_question(prompt).ok_or_else(|| {
                    BackendError::Malformed("mock cannot locate the target question".into())
                })?;
                let dist = self.table.get(question).ok_or_else(|| {
                    BackendError::Malformed(format!("mock table has no entry for {question:?}"))
                })?;
                dist.probs().to_vec()
            }
        };
        let probs: Vec<f64> = letters
            .iter()
            .map(|l| full.get(l.index()).copied().unwrap_or(0.0))
            .collect();
        Ok(RawScore {
            raw: json!({"mock": format!("{:?}", self.spec.scoring), "probs": probs}),
            body: ScoreBody::Direct(probs),
        })
    }

    fn complete(&self, prompt: &str, _params: &GenerateParams) -> Result<RawCompletion, BackendError> {
        let text = match self.spec.generation {
            MockGeneration::Canned => self.spec.canned.clone(),
            MockGeneration::Digest => {
                format!("{} [{}]", self.spec.canned, &sha256_hex(prompt)[..8])
            }
        };
        Ok(RawCompletion {
            raw: json!({"mock": "completion", "text": text}),
            text,
            finish_reason: Some("stop".into()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_mock_reads_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(
            &path,
            "{\"question\":\"Q1?\",\"probs\":{\"A\":0.1,\"B\":0.9}}\n",
        )
        .unwrap();
        let spec = BackendSpec::mock(
            "m",
            MockSpec {
                scoring: MockScoring::Table,
                table: Some(path),
                ..MockSpec::default()
            },
        );
        let t = MockTransport::from_spec(&spec).unwrap();
        let r = t
            .score("header\n\nQ1?\nA. x\nB. y\nAnswer:", &Letter::first_n(2), 20)
            .unwrap();
        assert_eq!(r.body, ScoreBody::Direct(vec![0.1, 0.9]));
        assert!(t.score("header\n\nQ2?\nA. x\nAnswer:", &Letter::first_n(2), 20).is_err());
    }

    #[test]
    fn hashed_mock_depends_on_model_and_prompt() {
        let a = MockTransport::from_spec(&BackendSpec::mock(
            "a",
            MockSpec {
                scoring: MockScoring::Hashed,
                ..MockSpec::default()
            },
        ))
        .unwrap();
        let b = MockTransport::from_spec(&BackendSpec::mock(
            "b",
            MockSpec {
                scoring: MockScoring::Hashed,
                ..MockSpec::default()
            },
        ))
        .unwrap();
        assert_eq!(a.hashed("p", 4), a.hashed("p", 4));
        assert_ne!(a.hashed("p", 4), b.hashed("p", 4));
        assert_ne!(a.hashed("p", 4), a.hashed("q", 4));
    }
}

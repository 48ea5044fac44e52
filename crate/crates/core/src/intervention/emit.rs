use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExplanationOrigin, IftExample, InterventionError, Setting};
use crate::choice::Letter;
use crate::util::{read_jsonl, write_jsonl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IftFormat {
    #[default]
    Pair,
    Conversation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub setting: Setting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_item_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_letter: Option<Letter>,
    pub explanation_origin: ExplanationOrigin,
    #[serde(default)]
    pub flagged: bool,
}

/// One line of a pair-format training file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub instruction: String,
    pub output: String,
    pub meta: PairMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: String,
    pub value: String,
}

/// One line of a conversation-format training file. `text` is the fully
/// rendered prompt string under the chat template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub system: String,
    pub conversations: Vec<Turn>,
    pub text: String,
    pub meta: PairMeta,
}

fn default_system() -> String {
    "A chat between a curious user and an artificial intelligence assistant. \
     The assistant gives helpful, detailed, and polite answers to the user's questions."
        .to_string()
}
fn default_user() -> String {
    "USER".to_string()
}
fn default_assistant() -> String {
    "ASSISTANT".to_string()
}
fn default_sep() -> String {
    " ".to_string()
}
fn default_eos() -> String {
    "</s>".to_string()
}

/// Two-turn chat template; the default follows the vicuna v1.1/v1.5 layout
/// `{system} USER: {instruction} ASSISTANT: {response}</s>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTemplate {
    #[serde(default = "default_system")]
    pub system: String,
    #[serde(default = "default_user")]
    pub user_role: String,
    #[serde(default = "default_assistant")]
    pub assistant_role: String,
    #[serde(default = "default_sep")]
    pub separator: String,
    #[serde(default = "default_eos")]
    pub eos: String,
}

impl Default for ChatTemplate {
    fn default() -> Self {
        ChatTemplate {
            system: default_system(),
            user_role: default_user(),
            assistant_role: default_assistant(),
            separator: default_sep(),
            eos: default_eos(),
        }
    }
}

impl ChatTemplate {
    pub fn render(&self, instruction: &str, response: &str) -> String {
        let sep = &self.separator;
        format!(
            "{}{sep}{}: {instruction}{sep}{}: {response}{}",
            self.system, self.user_role, self.assistant_role, self.eos
        )
    }
}

impl From<&IftExample> for PairMeta {
    fn from(e: &IftExample) -> Self {
        PairMeta {
            setting: e.setting,
            source_item_id: e.source_item_id.clone(),
            answer_letter: e.answer_letter,
            explanation_origin: e.explanation_origin,
            flagged: e.flagged,
        }
    }
}

impl From<&IftExample> for PairRecord {
    fn from(e: &IftExample) -> Self {
        PairRecord {
            instruction: e.instruction.clone(),
            output: e.response.clone(),
            meta: e.into(),
        }
    }
}

impl From<PairRecord> for IftExample {
    fn from(r: PairRecord) -> Self {
        IftExample {
            instruction: r.instruction,
            response: r.output,
            setting: r.meta.setting,
            source_item_id: r.meta.source_item_id,
            answer_letter: r.meta.answer_letter,
            explanation_origin: r.meta.explanation_origin,
            flagged: r.meta.flagged,
        }
    }
}

impl ConversationRecord {
    pub fn new(e: &IftExample, template: &ChatTemplate) -> Self {
        ConversationRecord {
            system: template.system.clone(),
            conversations: vec![
                Turn {
                    from: "human".into(),
                    value: e.instruction.clone(),
                },
                Turn {
                    from: "gpt".into(),
                    value: e.response.clone(),
                },
            ],
            text: template.render(&e.instruction, &e.response),
            meta: e.into(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> InterventionError {
    InterventionError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes one training record per line.
pub fn emit_ift_file(
    examples: &[IftExample],
    path: &Path,
    fmt: IftFormat,
    template: &ChatTemplate,
) -> Result<(), InterventionError> {
    let written = match fmt {
        IftFormat::Pair => {
            let recs: Vec<PairRecord> = examples.iter().map(Into::into).collect();
            write_jsonl(path, &recs)
        }
        IftFormat::Conversation => {
            let recs: Vec<_> = examples
                .iter()
                .map(|e| ConversationRecord::new(e, template))
                .collect();
            write_jsonl(path, &recs)
        }
    };
    written.map_err(|e| io_err(path, e))
}

pub fn load_pair_file(path: &Path) -> Result<Vec<IftExample>, InterventionError> {
    let recs: Vec<PairRecord> = read_jsonl(path).map_err(|e| InterventionError::Format {
        path: e.path.into(),
        line: e.line,
        message: e.message,
    })?;
    Ok(recs.into_iter().map(Into::into).collect())
}

#[derive(Deserialize)]
struct GeneralRow {
    instruction: String,
    #[serde(default)]
    input: String,
    output: String,
}

impl From<GeneralRow> for IftExample {
    fn from(r: GeneralRow) -> Self {
        let instruction = if r.input.trim().is_empty() {
            r.instruction
        } else {
            format!("{}\n\n{}", r.instruction, r.input)
        };
        IftExample::general(instruction, r.output)
    }
}

/// General instruction data as a JSON array or JSON lines of
/// `{"instruction", "input", "output"}` rows.
pub fn load_general(path: &Path) -> Result<Vec<IftExample>, InterventionError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let rows: Vec<GeneralRow> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| InterventionError::Format {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        read_jsonl(path).map_err(|e| InterventionError::Format {
            path: e.path.into(),
            line: e.line,
            message: e.message,
        })?
    };
    Ok(rows.into_iter().map(Into::into).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> IftExample {
        IftExample {
            instruction: "Q?\nA. x\nB. y".into(),
            response: "B\nExplanation: because".into(),
            setting: Setting::Incompatible,
            source_item_id: Some("h1".into()),
            answer_letter: Letter::from_char('B'),
            explanation_origin: ExplanationOrigin::ExternalModel,
            flagged: false,
        }
    }

    #[test]
    fn empty_list_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        emit_ift_file(&[], &p, IftFormat::Pair, &ChatTemplate::default()).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "");
    }

    #[test]
    fn pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        emit_ift_file(&[example()], &p, IftFormat::Pair, &ChatTemplate::default()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("{\"instruction\":"));
        assert_eq!(load_pair_file(&p).unwrap(), vec![example()]);
    }

    #[test]
    fn general_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        fs::write(&a, r#"[{"instruction":"Add.","input":"1+1","output":"2"},{"instruction":"Hi","output":"Hello"}]"#).unwrap();
        let g = load_general(&a).unwrap();
        assert_eq!(g[0].instruction, "Add.\n\n1+1");
        assert_eq!(g[1].instruction, "Hi");
        assert!(g.iter().all(|e| e.setting == Setting::General && e.source_item_id.is_none()));
        let b = dir.path().join("b.jsonl");
        fs::write(&b, "{\"instruction\":\"Hi\",\"input\":\"\",\"output\":\"Hello\"}\n").unwrap();
        assert_eq!(load_general(&b).unwrap(), vec![g[1].clone()]);
    }
}

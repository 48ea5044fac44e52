use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{CorpusError, Domain, McqItem};
use crate::choice::Letter;

/// On-disk corpus formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One JSON record per line with fields
    /// `id, domain, question, choices, answer, explanation?`.
    #[default]
    NativeJsonl,
    /// Headerless MMLU CSV: `question, A, B, C, D, answer`; the subject is the
    /// file stem without its `_test`/`_dev`/`_val` suffix.
    MmluCsv,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Drop items without a non-empty explanation instead of keeping them.
    pub require_explanation: bool,
}

/// An external benchmark item with its subcategory tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedItem {
    pub subcategory: String,
    pub item: McqItem,
}

pub fn load_corpus(path: &Path, fmt: CorpusFormat) -> Result<Vec<McqItem>, CorpusError> {
    load_corpus_with(path, fmt, &LoadOptions::default())
}

pub fn load_corpus_with(
    path: &Path,
    fmt: CorpusFormat,
    options: &LoadOptions,
) -> Result<Vec<McqItem>, CorpusError> {
    let items = match fmt {
        CorpusFormat::NativeJsonl => load_native(path)?,
        CorpusFormat::MmluCsv => load_mmlu_csv(path)?.into_iter().map(|t| t.item).collect(),
    };
    Ok(if options.require_explanation {
        items.into_iter().filter(McqItem::has_explanation).collect()
    } else {
        items
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_native(path: &Path) -> Result<Vec<McqItem>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |field: &str, reason: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            field: field.to_string(),
            reason,
        };
        let record: Map<String, Value> = match serde_json::from_str(&line) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(malformed("<record>", "expected a JSON object".into())),
            Err(e) => return Err(malformed("<record>", e.to_string())),
        };
        let item = parse_native_record(&record).map_err(|(f, r)| malformed(f, r))?;
        item.validate()
            .map_err(|v| malformed(v.field, v.reason.clone()))?;
        if !seen.insert(item.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: item.id,
            });
        }
        items.push(item);
    }
    Ok(items)
}

fn string_field<'a>(
    record: &'a Map<String, Value>,
    field: &'static str,
) -> Result<&'a str, (&'static str, String)> {
    match record.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err((field, format!("expected a string, got {other}"))),
        None => Err((field, "missing".into())),
    }
}

fn parse_native_record(record: &Map<String, Value>) -> Result<McqItem, (&'static str, String)> {
    let id = string_field(record, "id")?.to_string();
    let domain = Domain::parse(string_field(record, "domain")?);
    let question = string_field(record, "question")?.to_string();
    let choices_obj = match record.get("choices") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(("choices", "expected an object keyed by letter".into())),
        None => return Err(("choices", "missing".into())),
    };
    let mut keyed = BTreeMap::new();
    for (key, value) in choices_obj {
        let letter: Letter = key
            .parse()
            .map_err(|_| ("choices", format!("invalid choice letter {key:?}")))?;
        let text = value
            .as_str()
            .ok_or(("choices", format!("choice {key} is not a string")))?;
        keyed.insert(letter, text.to_string());
    }
    for (i, letter) in keyed.keys().enumerate() {
        if letter.index() != i {
            let seen: String = keyed.keys().map(|l| l.as_char()).collect();
            return Err((
                "choices",
                format!("letters must be consecutive from A, got {seen}"),
            ));
        }
    }
    let gold: Letter = string_field(record, "answer")?
        .parse()
        .map_err(|e| ("gold", format!("{e}")))?;
    let explanation = match record.get("explanation") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(("explanation", format!("expected a string, got {other}"))),
    };
    Ok(McqItem {
        id,
        domain,
        question,
        choices: keyed.into_values().collect(),
        gold,
        explanation,
    })
}

#[derive(Serialize)]
struct NativeRecordOut<'a> {
    id: &'a str,
    domain: &'a Domain,
    question: &'a str,
    choices: BTreeMap<Letter, &'a str>,
    answer: Letter,
    #[serde(skip_serializing_if = "Option::is_none")]
    explanation: Option<&'a str>,
}

/// Renders items in the native line format.
pub fn native_lines(items: &[McqItem]) -> String {
    let mut out = String::new();
    for item in items {
        let rec = NativeRecordOut {
            id: &item.id,
            domain: &item.domain,
            question: &item.question,
            choices: item
                .letters()
                .into_iter()
                .zip(item.choices.iter().map(String::as_str))
                .collect(),
            answer: item.gold,
            explanation: item.explanation.as_deref(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("corpus record serializes"));
        out.push('\n');
    }
    out
}

pub fn emit_corpus(items: &[McqItem], path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(native_lines(items).as_bytes())
        .map_err(io_err(path))
}

fn mmlu_subject(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in ["_test", "_dev", "_val"] {
        if let Some(subject) = stem.strip_suffix(suffix) {
            return subject.to_string();
        }
    }
    stem
}

pub fn load_mmlu_csv(path: &Path) -> Result<Vec<TaggedItem>, CorpusError> {
    let subject = mmlu_subject(path);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CorpusError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => CorpusError::Malformed {
                path: path.to_path_buf(),
                line: 0,
                field: "<record>".into(),
                reason: format!("{other:?}"),
            },
        })?;
    let mut items = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 1;
        let malformed = |field: &str, reason: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            reason,
        };
        let row = row.map_err(|e| malformed("<record>", e.to_string()))?;
        if row.len() < 4 {
            return Err(malformed(
                "<record>",
                format!("expected question, choices and answer columns, got {}", row.len()),
            ));
        }
        let fields: Vec<&str> = row.iter().collect();
        let answer = fields[fields.len() - 1].trim();
        let gold: Letter = answer
            .parse()
            .map_err(|e| malformed("gold", format!("{e}")))?;
        let item = McqItem {
            id: format!("{subject}-{idx}"),
            domain: Domain::Other(subject.clone()),
            question: fields[0].to_string(),
            choices: fields[1..fields.len() - 1]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            gold,
            explanation: None,
        };
        item.validate()
            .map_err(|v| malformed(v.field, v.reason.clone()))?;
        items.push(TaggedItem {
            subcategory: subject.clone(),
            item,
        });
    }
    Ok(items)
}

/// Loads every `*_test.csv` in `dir`, in file-name order.
pub fn load_mmlu_dir(dir: &Path) -> Result<Vec<TaggedItem>, CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_test.csv"))
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_mmlu_csv(&p)?);
    }
    Ok(out)
}

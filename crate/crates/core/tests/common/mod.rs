//! Golden-file checks shared by the golden and acceptance test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use iftkit::analysis::ConsistencyReport;
use iftkit::choice::Letter;
use iftkit::corpus::{Domain, McqItem, SuiteKind};
use iftkit::intervention::{ChatTemplate, ConversationRecord, ExplanationOrigin, IftExample, Setting};
use iftkit::pipeline::{FleetFile, Tables};
use iftkit::prompts;
use serde_json::Value;

pub const ANCHORS: [&str; 4] = [
    "The following are multiple choice questions about",
    "Please explain why.",
    "write a short piece of evidence",
    "Given the context. Please choose the correct answer.",
];

pub const CONTEXT: &str =
    "In 1648 a set of treaties signed in Osnabrueck and Muenster brought the fighting in the Holy Roman Empire to an end.";

pub const EXPLANATION: &str = "The Peace of Westphalia of 1648 concluded the war.";

/// Golden file contents without the final newline every golden ends with.
pub fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let text = std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    text.strip_suffix('\n').map(str::to_string).unwrap_or(text)
}

fn item(id: &str, question: &str, choices: [&str; 4], gold: char) -> McqItem {
    McqItem {
        id: id.into(),
        domain: Domain::History,
        question: question.into(),
        choices: choices.iter().map(|c| c.to_string()).collect(),
        gold: Letter::from_char(gold).unwrap(),
        explanation: None,
    }
}

pub fn target() -> McqItem {
    item(
        "t1",
        "Which treaty ended the Thirty Years' War?",
        ["Treaty of Utrecht", "Peace of Westphalia", "Treaty of Versailles", "Congress of Vienna"],
        'B',
    )
}

pub fn demos() -> Vec<McqItem> {
    vec![
        item("d1", "Who was the first emperor of Rome?", ["Julius Caesar", "Augustus", "Nero", "Trajan"], 'B'),
        item("d2", "In which year did the Berlin Wall fall?", ["1989", "1991", "1961", "1975"], 'A'),
        item("d3", "Which civilization built Machu Picchu?", ["Aztec", "Maya", "Inca", "Olmec"], 'C'),
        item("d4", "Who wrote the Ninety-five Theses?", ["John Calvin", "Erasmus", "Thomas More", "Martin Luther"], 'D'),
        item(
            "d5",
            "Which empire was ruled from Constantinople after 1453?",
            ["Byzantine Empire", "Ottoman Empire", "Holy Roman Empire", "Russian Empire"],
            'B',
        ),
    ]
}

fn letter(c: char) -> Letter {
    Letter::from_char(c).unwrap()
}

/// Every rendered prompt paired with the golden file it must equal.
pub fn rendered_prompts() -> Vec<(&'static str, String)> {
    let t = target();
    vec![
        ("probe_icl5.txt", prompts::probe_prompt(&t, &demos(), &Domain::History)),
        ("vanilla_instruction.txt", prompts::vanilla_instruction(&t)),
        ("vanilla_output.txt", prompts::vanilla_output(letter('B'), EXPLANATION)),
        ("base_explanation.txt", prompts::base_explanation_prompt(&t, letter('C'))),
        ("external_explanation.txt", prompts::external_explanation_prompt(&t, letter('B'))),
        ("evidence.txt", prompts::evidence_prompt(&t, letter('B'))),
        ("contextualized_instruction.txt", prompts::contextualized_instruction(&t, CONTEXT)),
    ]
}

pub fn check_prompt_goldens() -> Result<(), String> {
    for (name, got) in rendered_prompts() {
        let want = golden(name);
        if got != want {
            return Err(format!("{name} differs from its golden file:\n--- got\n{got}\n--- want\n{want}"));
        }
    }
    let all: String = rendered_prompts().into_iter().map(|(_, p)| p).collect();
    for a in ANCHORS {
        if !all.contains(a) {
            return Err(format!("anchor {a:?} missing"));
        }
    }
    Ok(())
}

pub fn conversation_record() -> ConversationRecord {
    let t = target();
    let e = IftExample {
        instruction: prompts::vanilla_instruction(&t),
        response: prompts::vanilla_output(letter('B'), EXPLANATION),
        setting: Setting::Harmonious,
        source_item_id: Some(t.id.clone()),
        answer_letter: Some(letter('B')),
        explanation_origin: ExplanationOrigin::ExternalModel,
        flagged: false,
    };
    ConversationRecord::new(&e, &ChatTemplate::default())
}

pub fn check_conversation_golden() -> Result<(), String> {
    let rec = conversation_record();
    let want = golden("conversation_text.txt");
    if rec.text != want {
        return Err(format!("conversation text differs:\n{}\nvs\n{want}", rec.text));
    }
    let roles: Vec<&str> = rec.conversations.iter().map(|t| t.from.as_str()).collect();
    if roles != ["human", "gpt"] {
        return Err(format!("unexpected turns {roles:?}"));
    }
    Ok(())
}

/// Reports for two base models, two domains, three settings and three
/// suites, enough for every fleet group to be analysed.
pub fn table_fixture() -> Vec<ConsistencyReport> {
    let mut out = Vec::new();
    let mut k = 0.0;
    for model in ["base-a", "base-b"] {
        for domain in ["history", "medicine"] {
            for setting in ["harmonious", "incompatible", "self_aligning"] {
                for suite in SuiteKind::ALL {
                    k += 1.0;
                    let corr = 0.2 + (k * 0.37) % 0.7;
                    out.push(ConsistencyReport {
                        base_model: model.into(),
                        tuned_model: format!("{model}-{domain}-{setting}"),
                        suite_kind: suite,
                        mean_rank_corr: Some(corr),
                        mean_kl: 1.0 - corr + (k * 0.11) % 0.2,
                        tuned_accuracy: 0.3 + corr * 0.5 + (k * 0.07) % 0.1,
                        base_accuracy: 0.4 + (k * 0.05) % 0.2,
                        n_items: 50,
                        n_excluded: 0,
                        labels: BTreeMap::from([
                            ("domain".to_string(), domain.to_string()),
                            ("setting".to_string(), setting.to_string()),
                        ]),
                    });
                }
            }
        }
    }
    out
}

fn key_paths(v: &Value, prefix: &str, wildcard_maps: bool, out: &mut BTreeSet<String>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let name = if wildcard_maps { join("*") } else { join(k) };
                out.insert(name.clone());
                key_paths(child, &name, prefix.ends_with("[]") && k == "cells", out);
            }
        }
        Value::Array(a) => {
            let name = format!("{prefix}[]");
            for child in a {
                if !child.is_null() {
                    out.insert(name.clone());
                }
                key_paths(child, &name, false, out);
            }
        }
        _ => {}
    }
}

pub fn check_table_schema() -> Result<(), String> {
    let reports = table_fixture();
    let fleet = FleetFile::from_reports(&reports);
    let tables = Tables::new(&reports, &fleet);
    let md = tables.to_markdown();
    let skeleton: Vec<&str> = md
        .lines()
        .filter(|l| l.starts_with("## ") || l.starts_with("| Model |") || l.starts_with("|---"))
        .collect();
    let want = golden("tables_schema.md");
    if skeleton.join("\n") != want {
        return Err(format!("table headers differ:\n{}\nvs\n{want}", skeleton.join("\n")));
    }
    let json = serde_json::to_value(&tables).map_err(|e| e.to_string())?;
    let mut paths = BTreeSet::new();
    key_paths(&json, "", false, &mut paths);
    let got: Vec<&str> = paths.iter().map(String::as_str).collect();
    let want = golden("tables_schema.txt");
    let want: Vec<&str> = want.lines().collect();
    if got != want {
        return Err(format!("tables.json key paths differ: {got:?}"));
    }
    if tables.correlation.rows.iter().all(|r| r.model != "All") {
        return Err("pooled correlation row missing".into());
    }
    Ok(())
}

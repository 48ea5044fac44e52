//! Summary tables: accuracy by setting, partial correlation by model and
//! suite, and KL divergence by setting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, ConsistencyReport, FleetAnalysis};
use crate::corpus::SuiteKind;

pub const SETTING_LABEL: &str = "setting";
pub const DOMAIN_LABEL: &str = "domain";
pub const RATIO_LABEL: &str = "ratio";

/// Column order of the accuracy table within each domain.
pub const ACCURACY_SETTINGS: [(&str, &str); 3] = [
    ("harmonious", "HAR"),
    ("incompatible", "INC"),
    ("self_aligning", "SELF"),
];

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn cell(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v * scale))
}

fn markdown_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn markdown_rule(n: usize) -> String {
    format!("|{}\n", "---|".repeat(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub suite: SuiteKind,
    /// Tuned accuracy per domain, in `ACCURACY_SETTINGS` order.
    pub cells: BTreeMap<String, [Option<f64>; 3]>,
}

/// Tuned accuracy of the harmonious, incompatible and self-aligning models
/// for every base model, suite and domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub domains: Vec<String>,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn from_reports(reports: &[ConsistencyReport]) -> Self {
        let domains: BTreeSet<String> = reports
            .iter()
            .filter_map(|r| r.labels.get(DOMAIN_LABEL).cloned())
            .collect();
        let models: BTreeSet<&str> = reports.iter().map(|r| r.base_model.as_str()).collect();
        let mut rows = Vec::new();
        for model in models {
            for suite in SuiteKind::ALL {
                let mut cells = BTreeMap::new();
                for d in &domains {
                    let value = |setting: &str| {
                        mean(
                            reports
                                .iter()
                                .filter(|r| {
                                    r.base_model == model
                                        && r.suite_kind == suite
                                        && r.labels.get(DOMAIN_LABEL) == Some(d)
                                        && r.labels.get(SETTING_LABEL).map(String::as_str) == Some(setting)
                                })
                                .map(|r| r.tuned_accuracy),
                        )
                    };
                    cells.insert(d.clone(), ACCURACY_SETTINGS.map(|(s, _)| value(s)));
                }
                if cells.values().any(|c| c.iter().any(Option::is_some)) {
                    rows.push(AccuracyRow {
                        model: model.to_string(),
                        suite,
                        cells,
                    });
                }
            }
        }
        AccuracyTable {
            domains: domains.into_iter().collect(),
            rows,
        }
    }

    /// Percentages; harmonious and self-aligning cells carry their gain
    /// over the incompatible cell.
    pub fn to_markdown(&self) -> String {
        let mut header = vec!["Model".to_string(), "Eval".to_string()];
        for d in &self.domains {
            header.extend(ACCURACY_SETTINGS.iter().map(|(_, short)| format!("{d} {short}")));
        }
        let mut out = markdown_row(&header);
        out.push_str(&markdown_rule(header.len()));
        for row in &self.rows {
            let mut cells = vec![row.model.clone(), row.suite.label().to_string()];
            for d in &self.domains {
                let [har, inc, slf] = row.cells[d];
                let with_gain = |v: Option<f64>| match (v, inc) {
                    (Some(v), Some(i)) => format!("{:.2} ({:+.2})", v * 100.0, (v - i) * 100.0),
                    _ => cell(v, 100.0),
                };
                cells.push(with_gain(har));
                cells.push(cell(inc, 100.0));
                cells.push(with_gain(slf));
            }
            out.push_str(&markdown_row(&cells));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model: String,
    /// `(r, p)` per suite in HOMO, ID, OOD order.
    pub cells: [Option<(f64, f64)>; 3],
}

/// Partial correlation per base model and suite, with a pooled "All" row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<CorrelationRow>,
}

fn suite_of(f: &FleetAnalysis) -> Option<SuiteKind> {
    f.group.get("suite").and_then(|s| SuiteKind::parse(s))
}

impl CorrelationTable {
    /// `per_model` is grouped by (model, suite); `pooled` by suite alone.
    pub fn new(per_model: &[FleetAnalysis], pooled: &[FleetAnalysis]) -> Self {
        let fill = |fleet: &[&FleetAnalysis]| {
            SuiteKind::ALL.map(|s| {
                fleet
                    .iter()
                    .find(|f| suite_of(f) == Some(s))
                    .map(|f| (f.partial_r, f.p_value))
            })
        };
        let models: BTreeSet<&str> = per_model
            .iter()
            .filter_map(|f| f.group.get("model").map(String::as_str))
            .collect();
        let mut rows: Vec<CorrelationRow> = models
            .into_iter()
            .map(|m| {
                let mine: Vec<_> = per_model
                    .iter()
                    .filter(|f| f.group.get("model").map(String::as_str) == Some(m))
                    .collect();
                CorrelationRow {
                    model: m.to_string(),
                    cells: fill(&mine),
                }
            })
            .collect();
        if !pooled.is_empty() {
            rows.push(CorrelationRow {
                model: "All".into(),
                cells: fill(&pooled.iter().collect::<Vec<_>>()),
            });
        }
        CorrelationTable { rows }
    }

    pub fn to_markdown(&self) -> String {
        let mut header = vec!["Model".to_string()];
        for s in SuiteKind::ALL {
            header.push(format!("{} r", s.label()));
            header.push(format!("{} p-value", s.label()));
        }
        let mut out = markdown_row(&header);
        out.push_str(&markdown_rule(header.len()));
        for row in &self.rows {
            let mut cells = vec![row.model.clone()];
            for c in row.cells {
                cells.push(cell(c.map(|c| c.0), 1.0));
                cells.push(cell(c.map(|c| c.1), 1.0));
            }
            out.push_str(&markdown_row(&cells));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub model: String,
    /// Tuned model with the highest mean accuracy across suites.
    pub best_model: Option<String>,
    pub best: Option<f64>,
    pub self_aligning: Option<f64>,
    pub incompatible: Option<f64>,
}

/// Mean KL divergence (averaged over suites) per base model for the best
/// tuned model, the self-aligning models and the incompatible models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceTable {
    pub rows: Vec<DivergenceRow>,
}

impl DivergenceTable {
    pub fn from_reports(reports: &[ConsistencyReport]) -> Self {
        let models: BTreeSet<&str> = reports.iter().map(|r| r.base_model.as_str()).collect();
        let rows = models
            .into_iter()
            .map(|m| {
                let mine: Vec<&ConsistencyReport> =
                    reports.iter().filter(|r| r.base_model == m).collect();
                let by_setting = |s: &str| {
                    mean(
                        mine.iter()
                            .filter(|r| r.labels.get(SETTING_LABEL).map(String::as_str) == Some(s))
                            .map(|r| r.mean_kl),
                    )
                };
                let mut per_tuned: BTreeMap<&str, Vec<&ConsistencyReport>> = BTreeMap::new();
                for r in &mine {
                    per_tuned.entry(r.tuned_model.as_str()).or_default().push(r);
                }
                let best = per_tuned
                    .iter()
                    .map(|(t, rs)| {
                        let acc = mean(rs.iter().map(|r| r.tuned_accuracy)).unwrap_or(0.0);
                        let kl = mean(rs.iter().map(|r| r.mean_kl)).unwrap_or(0.0);
                        (*t, acc, kl)
                    })
                    .fold(None::<(&str, f64, f64)>, |best, cur| match best {
                        Some(b) if b.1 >= cur.1 => Some(b),
                        _ => Some(cur),
                    });
                DivergenceRow {
                    model: m.to_string(),
                    best_model: best.map(|b| b.0.to_string()),
                    best: best.map(|b| b.2),
                    self_aligning: by_setting("self_aligning"),
                    incompatible: by_setting("incompatible"),
                }
            })
            .collect();
        DivergenceTable { rows }
    }

    pub fn to_markdown(&self) -> String {
        let header = ["Model", "Best", "Self-aligning", "Incompatible"].map(String::from);
        let mut out = markdown_row(&header);
        out.push_str(&markdown_rule(header.len()));
        for r in &self.rows {
            out.push_str(&markdown_row(&[
                r.model.clone(),
                cell(r.best, 1.0),
                cell(r.self_aligning, 1.0),
                cell(r.incompatible, 1.0),
            ]));
        }
        out
    }
}

/// All three tables as one markdown document.
pub fn render_report(accuracy: &AccuracyTable, correlation: &CorrelationTable, divergence: &DivergenceTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "## Accuracy by setting\n\n{}", accuracy.to_markdown());
    let _ = writeln!(out, "## Partial correlation of consistency and accuracy\n\n{}", correlation.to_markdown());
    let _ = write!(out, "## KL divergence from the base model\n\n{}", divergence.to_markdown());
    out
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    x: f64,
    y: f64,
    z: f64,
    label: String,
    group: &'a str,
}

/// Consistency / accuracy points of every analysed group as CSV.
pub fn write_scatter(fleet: &[FleetAnalysis], path: &Path) -> Result<(), AnalysisError> {
    let io = |e: &dyn std::fmt::Display| AnalysisError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for f in fleet {
        let group = f
            .group
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        for p in &f.points {
            let label = format!(
                "{}/{}",
                p.labels.get("tuned_model").map_or("", String::as_str),
                p.labels.get("suite").map_or("", String::as_str)
            );
            w.serialize(ScatterRow {
                x: p.x,
                y: p.y,
                z: p.z,
                label,
                group: &group,
            })
            .map_err(|e| io(&e))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| io(&e))?;
    crate::util::write_atomic(path, &bytes).map_err(|e| io(&e))
}

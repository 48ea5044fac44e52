use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Domain, McqItem, TaggedItem};

/// The 57 MMLU subjects.
pub const MMLU_SUBCATEGORIES: [&str; 57] = [
    "abstract_algebra",
    "anatomy",
    "astronomy",
    "business_ethics",
    "clinical_knowledge",
    "college_biology",
    "college_chemistry",
    "college_computer_science",
    "college_mathematics",
    "college_medicine",
    "college_physics",
    "computer_security",
    "conceptual_physics",
    "econometrics",
    "electrical_engineering",
    "elementary_mathematics",
    "formal_logic",
    "global_facts",
    "high_school_biology",
    "high_school_chemistry",
    "high_school_computer_science",
    "high_school_european_history",
    "high_school_geography",
    "high_school_government_and_politics",
    "high_school_macroeconomics",
    "high_school_mathematics",
    "high_school_microeconomics",
    "high_school_physics",
    "high_school_psychology",
    "high_school_statistics",
    "high_school_us_history",
    "high_school_world_history",
    "human_aging",
    "human_sexuality",
    "international_law",
    "jurisprudence",
    "logical_fallacies",
    "machine_learning",
    "management",
    "marketing",
    "medical_genetics",
    "miscellaneous",
    "moral_disputes",
    "moral_scenarios",
    "nutrition",
    "philosophy",
    "prehistory",
    "professional_accounting",
    "professional_law",
    "professional_medicine",
    "professional_psychology",
    "public_relations",
    "security_studies",
    "sociology",
    "us_foreign_policy",
    "virology",
    "world_religions",
];

const ENGINEERING_IN_DOMAIN: &[&str] = &["electrical_engineering"];

const HISTORY_IN_DOMAIN: &[&str] = &[
    "high_school_european_history",
    "high_school_us_history",
    "high_school_world_history",
    "prehistory",
];

const JURISPRUDENCE_IN_DOMAIN: &[&str] = &[
    "econometrics",
    "high_school_geography",
    "high_school_government_and_politics",
    "high_school_macroeconomics",
    "high_school_microeconomics",
    "high_school_psychology",
    "human_sexuality",
    "international_law",
    "jurisprudence",
    "professional_law",
    "sociology",
    "public_relations",
    "professional_psychology",
    "security_studies",
    "us_foreign_policy",
];

const MEDICINE_IN_DOMAIN: &[&str] = &[
    "anatomy",
    "clinical_knowledge",
    "college_medicine",
    "human_aging",
    "medical_genetics",
    "nutrition",
    "professional_medicine",
    "virology",
];

/// Which evaluation set a result belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Homo,
    InDomain,
    OutOfDomain,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 3] = [SuiteKind::Homo, SuiteKind::InDomain, SuiteKind::OutOfDomain];

    pub fn key(self) -> &'static str {
        match self {
            SuiteKind::Homo => "homo",
            SuiteKind::InDomain => "in_domain",
            SuiteKind::OutOfDomain => "out_of_domain",
        }
    }

    /// Column label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            SuiteKind::Homo => "HOMO",
            SuiteKind::InDomain => "ID",
            SuiteKind::OutOfDomain => "OOD",
        }
    }

    pub fn parse(s: &str) -> Option<SuiteKind> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.key() == s || k.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Homogeneous, in-domain and out-of-domain evaluation sets for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSuite {
    pub domain: Domain,
    pub homo: Vec<McqItem>,
    pub in_domain: Vec<McqItem>,
    pub out_of_domain: Vec<McqItem>,
}

impl EvalSuite {
    pub fn items(&self, kind: SuiteKind) -> &[McqItem] {
        match kind {
            SuiteKind::Homo => &self.homo,
            SuiteKind::InDomain => &self.in_domain,
            SuiteKind::OutOfDomain => &self.out_of_domain,
        }
    }
}

/// In-domain subcategory lists per domain plus the subcategory universe.
/// Out-of-domain is always the universe minus the in-domain list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcategorySplits {
    pub universe: Vec<String>,
    pub in_domain: BTreeMap<String, Vec<String>>,
}

impl Default for SubcategorySplits {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let in_domain = [
            (Domain::Engineering, ENGINEERING_IN_DOMAIN),
            (Domain::History, HISTORY_IN_DOMAIN),
            (Domain::Jurisprudence, JURISPRUDENCE_IN_DOMAIN),
            (Domain::Medicine, MEDICINE_IN_DOMAIN),
        ]
        .into_iter()
        .map(|(d, xs)| (d.key().to_string(), owned(xs)))
        .collect();
        SubcategorySplits {
            universe: owned(&MMLU_SUBCATEGORIES),
            in_domain,
        }
    }
}

impl SubcategorySplits {
    /// Reads a TOML file with `universe = [...]` and an `[in_domain]` table
    /// keyed by domain. A missing `universe` falls back to the MMLU subjects.
    pub fn from_toml_file(path: &Path) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        struct Raw {
            universe: Option<Vec<String>>,
            in_domain: BTreeMap<String, Vec<String>>,
        }
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: Raw = toml::from_str(&text).map_err(|e| CorpusError::Config(e.to_string()))?;
        let splits = SubcategorySplits {
            universe: raw
                .universe
                .unwrap_or_else(|| MMLU_SUBCATEGORIES.iter().map(|s| s.to_string()).collect()),
            in_domain: raw.in_domain,
        };
        splits.check()?;
        Ok(splits)
    }

    fn check(&self) -> Result<(), CorpusError> {
        let universe: BTreeSet<&str> = self.universe.iter().map(String::as_str).collect();
        for (domain, subs) in &self.in_domain {
            if let Some(s) = subs.iter().find(|s| !universe.contains(s.as_str())) {
                return Err(CorpusError::Config(format!(
                    "in-domain subcategory {s:?} of {domain} is not in the universe"
                )));
            }
        }
        Ok(())
    }

    pub fn in_domain_set(&self, domain: &Domain) -> BTreeSet<&str> {
        self.in_domain
            .get(domain.key())
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn out_of_domain_set(&self, domain: &Domain) -> BTreeSet<&str> {
        let inside = self.in_domain_set(domain);
        self.universe
            .iter()
            .map(String::as_str)
            .filter(|s| !inside.contains(s))
            .collect()
    }
}

/// Routes tagged external items into in-domain and out-of-domain sets.
///
/// With `strict`, a tag outside the universe is an error; otherwise such
/// items count as out-of-domain.
pub fn build_eval_suite(
    domain: &Domain,
    homo_test: Vec<McqItem>,
    external_items: &[TaggedItem],
    splits: &SubcategorySplits,
    strict: bool,
) -> Result<EvalSuite, CorpusError> {
    let inside = splits.in_domain_set(domain);
    let universe: BTreeSet<&str> = splits.universe.iter().map(String::as_str).collect();
    let mut in_domain = Vec::new();
    let mut out_of_domain = Vec::new();
    for tagged in external_items {
        let sub = tagged.subcategory.as_str();
        if inside.contains(sub) {
            in_domain.push(tagged.item.clone());
        } else if universe.contains(sub) || !strict {
            out_of_domain.push(tagged.item.clone());
        } else {
            return Err(CorpusError::UnknownSubcategory(sub.to_string()));
        }
    }
    Ok(EvalSuite {
        domain: domain.clone(),
        homo: homo_test,
        in_domain,
        out_of_domain,
    })
}

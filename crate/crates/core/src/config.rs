//! Run configuration read from TOML. Relative paths resolve against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendKind, BackendSpec};
use crate::corpus::{CorpusFormat, Domain};
use crate::intervention::{ChatTemplate, IftFormat};
use crate::probing::{DEFAULT_SHOTS, DEFAULT_THRESHOLD};
use crate::util::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Default ratio grid for mixed datasets.
pub const DEFAULT_RATIO_GRID: [f64; 8] = [0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_DEV_N: usize = 10;

/// Default (test, train) sizes per domain.
pub fn default_split_sizes(domain: &Domain) -> (usize, Option<usize>) {
    match domain {
        Domain::Medicine => (1462, Some(20000)),
        Domain::History => (250, Some(8605)),
        Domain::Jurisprudence => (250, Some(6510)),
        Domain::Engineering => (250, Some(4805)),
        Domain::Other(_) => (250, None),
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_shots() -> usize {
    DEFAULT_SHOTS
}
fn default_ratio_grid() -> Vec<f64> {
    DEFAULT_RATIO_GRID.to_vec()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_dev_n() -> usize {
    DEFAULT_DEV_N
}
fn default_blend() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub name: Domain,
    pub corpus: PathBuf,
    #[serde(default)]
    pub format: CorpusFormat,
    #[serde(default = "default_dev_n")]
    pub dev_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_n: Option<usize>,
    /// Training items; all remaining items when absent and the domain has no default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_n: Option<usize>,
    #[serde(default)]
    pub require_explanation: bool,
}

impl DomainConfig {
    pub fn test_n(&self) -> usize {
        self.test_n.unwrap_or(default_split_sizes(&self.name).0)
    }

    /// Training size for a corpus of `available` items.
    pub fn train_n(&self, available: usize) -> usize {
        let rest = available.saturating_sub(self.dev_n + self.test_n());
        self.train_n
            .or(default_split_sizes(&self.name).1)
            .map_or(rest, |n| n.min(rest))
    }
}

/// A fine-tuned model to evaluate and compare against its base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunedConfig {
    pub backend: BackendSpec,
    pub base_model: String,
    pub domain: Domain,
    /// Dataset the model was trained on, e.g. `incompatible` or `mix`.
    pub setting: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_ratio_grid")]
    pub ratio_grid: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_data_path: Option<PathBuf>,
    /// Share of general examples in blended datasets.
    #[serde(default = "default_blend")]
    pub general_blend: f64,
    #[serde(default)]
    pub dataset_format: IftFormat,
    #[serde(default)]
    pub chat_template: ChatTemplate,
    /// Examples per setting; the largest feasible size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_setting: Option<usize>,
    /// Directory of MMLU-style CSV files for the ID and OOD suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_benchmark: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory_splits: Option<PathBuf>,
    #[serde(default)]
    pub strict_subcategories: bool,
    pub domains: Vec<DomainConfig>,
    pub models: Vec<BackendSpec>,
    /// Model that writes golden-answer explanations and evidence; each base
    /// model explains for itself when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explainer: Option<BackendSpec>,
    #[serde(default)]
    pub tuned: Vec<TunedConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Flag overrides; set values win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub shots: Option<usize>,
    pub ratio_grid: Option<Vec<f64>>,
    pub backend: Option<BackendKind>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        RunConfig::from_toml_str(&text, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            e => e,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.cache_dir {
            self.cache_dir = Some(d.clone());
        }
        if let Some(t) = o.threshold {
            self.threshold = t;
        }
        if let Some(k) = o.shots {
            self.shots = k;
        }
        if let Some(g) = &o.ratio_grid {
            self.ratio_grid = g.clone();
        }
        if let Some(kind) = o.backend {
            for m in self.models.iter_mut().chain(self.explainer.as_mut()) {
                m.kind = kind;
            }
            for t in &mut self.tuned {
                t.backend.kind = kind;
            }
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if let Some(r) = self.ratio_grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return bad(format!("ratio {r} outside [0, 1]"));
        }
        if self.ratio_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("ratio_grid must be sorted and unique".into());
        }
        if !(0.0..1.0).contains(&self.general_blend) {
            return bad(format!("general_blend {} outside [0, 1)", self.general_blend));
        }
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        for d in &self.domains {
            if d.dev_n < self.shots {
                return bad(format!("domain {}: dev_n {} is below shots {}", d.name, d.dev_n, self.shots));
            }
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.model_name.as_str()).collect();
        names.extend(self.tuned.iter().map(|t| t.backend.model_name.as_str()));
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("model name {} is used twice", w[0]));
        }
        for spec in self.models.iter().chain(self.explainer.as_ref()).chain(self.tuned.iter().map(|t| &t.backend)) {
            spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if spec.kind == BackendKind::ToySim {
                return bad(format!("{}: toy_sim backends only exist inside the simulation", spec.model_name));
            }
        }
        for t in &self.tuned {
            if !self.models.iter().any(|m| m.model_name == t.base_model) {
                return bad(format!("tuned model {} names unknown base model {}", t.backend.model_name, t.base_model));
            }
            if !self.domains.iter().any(|d| d.name == t.domain) {
                return bad(format!("tuned model {} names unknown domain {}", t.backend.model_name, t.domain));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// `spec` with a relative mock table path resolved.
    pub fn resolved_spec(&self, spec: &BackendSpec) -> BackendSpec {
        let mut spec = spec.clone();
        if let Some(t) = spec.mock.as_mut().and_then(|m| m.table.as_mut()) {
            *t = self.resolve(t);
        }
        spec
    }

    pub fn output_root(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// SHA-256 of the configuration without its output and cache locations,
    /// which do not affect artifact contents.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        sha256_hex(serde_json::to_vec(&c).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        ratio_grid = [0.0, 0.5, 1.0]

        [[domains]]
        name = "history"
        corpus = "history.jsonl"

        [[models]]
        kind = "mock"
        model_name = "base"
    "#;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_toml_str(text, Path::new("/cfg")).unwrap()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = cfg(MINIMAL);
        c.validate().unwrap();
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.shots, 5);
        assert_eq!(c.domains[0].dev_n, 10);
        assert_eq!(c.domains[0].test_n(), 250);
        assert_eq!(c.domains[0].train_n(20000), 8605);
        assert_eq!(c.domains[0].train_n(300), 40);
        assert_eq!(c.resolve(Path::new("history.jsonl")), PathBuf::from("/cfg/history.jsonl"));
        assert_eq!(c.output_root(), PathBuf::from("/cfg/out"));
    }

    #[test]
    fn split_defaults_per_domain() {
        assert_eq!(default_split_sizes(&Domain::Medicine), (1462, Some(20000)));
        assert_eq!(default_split_sizes(&Domain::Jurisprudence), (250, Some(6510)));
        assert_eq!(default_split_sizes(&Domain::Engineering), (250, Some(4805)));
    }

    #[test]
    fn invariants_are_enforced() {
        for (needle, replacement) in [
            ("seed = 3", "threshold = 1.0"),
            ("seed = 3", "threshold = 0.0"),
            ("[0.0, 0.5, 1.0]", "[0.5, 0.0]"),
            ("[0.0, 0.5, 1.0]", "[0.0, 0.0]"),
            ("[0.0, 0.5, 1.0]", "[0.0, 1.5]"),
            ("seed = 3", "shots = 11"),
        ] {
            let c = cfg(&MINIMAL.replace(needle, replacement));
            assert!(c.validate().is_err(), "{replacement}");
        }
        let err = RunConfig::from_toml_str(&format!("bogus = 1\n{MINIMAL}"), Path::new(""));
        assert!(err.is_err());
    }

    #[test]
    fn flags_win_and_hash_ignores_locations() {
        let mut c = cfg(MINIMAL);
        let before = c.hash();
        c.apply(&Overrides {
            output_dir: Some("elsewhere".into()),
            cache_dir: Some("cache".into()),
            ..Overrides::default()
        });
        assert_eq!(c.hash(), before);
        c.apply(&Overrides {
            seed: Some(9),
            threshold: Some(0.7),
            ratio_grid: Some(vec![0.2]),
            backend: Some(BackendKind::HttpChat),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.threshold, c.ratio_grid.clone()), (9, 0.7, vec![0.2]));
        assert_eq!(c.models[0].kind, BackendKind::HttpChat);
        assert_ne!(c.hash(), before);
    }
}

//! Command implementations behind the CLI. Every command writes its
//! artifacts under the output directory plus a manifest in `manifests/`;
//! item-level failures go to `manifests/<command>.errors.json`.
//!
//! ```text
//! splits/<domain>/{dev,test,train}.jsonl
//! probe/<domain>/<model>.jsonl
//! datasets/<domain>/<model>/<setting>.jsonl, ratio-<r>.jsonl
//! eval/<domain>/<model>__<mode>.jsonl
//! analysis/{reports.jsonl,fleet.json,scatter.csv,tables.md,tables.json}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::tables::{
    render_report, write_scatter, AccuracyTable, CorrelationTable, DivergenceTable, DOMAIN_LABEL,
    RATIO_LABEL, SETTING_LABEL,
};
use crate::analysis::{
    consistency_report, fleet_analysis, AnalysisError, ConsistencyReport, FleetAnalysis,
    SkippedGroup, DEFAULT_KL_EPSILON,
};
use crate::backend::{BackendError, BackendSpec, Client, ResponseCache};
use crate::config::{ConfigError, DomainConfig, RunConfig};
use crate::corpus::{
    build_eval_suite, emit_corpus, load_corpus, load_corpus_with, load_mmlu_dir, split_corpus,
    CorpusError, CorpusFormat, Domain, LoadOptions, McqItem, SubcategorySplits,
};
use crate::evaluation::{evaluate, read_eval_file, write_eval_file, EvalError, EvalMode};
use crate::intervention::{
    blend_general, build_setting_dataset, emit_ift_file, equal_size, load_general, mix_ratio,
    partition_by_status, Explainer, GenerationConfig, IftExample, InterventionError, MixSpec,
    Setting,
};
use crate::manifest::{ErrorManifest, FailureEntry, Manifest};
use crate::probing::{probe_corpus, ItemFailure, ProbeError, ProbeRecord, ProbeStatus};
use crate::simulation::{run_synthetic_study, SimulationError, StudyConfig};
use crate::util::{derive_seed, read_jsonl, sha256_hex, write_atomic, write_jsonl};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("corpus not found: {0}")]
    CorpusNotFound(PathBuf),
    #[error("{path} not found; run `{step}` first")]
    MissingInput { path: PathBuf, step: &'static str },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("{scope}: {source}")]
    Intervention {
        scope: String,
        #[source]
        source: InterventionError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    /// Errors caused by the invocation rather than by the run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_) | PipelineError::CorpusNotFound(_) | PipelineError::MissingInput { .. }
        )
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Result of one command.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub command: String,
    pub manifest: PathBuf,
    pub error_manifest: Option<PathBuf>,
    pub failures: usize,
    pub network_calls: u64,
    pub cache_hits: u64,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    pub fn is_complete(&self) -> bool {
        self.failures == 0
    }

    pub fn cache_hit_ratio(&self) -> Option<f64> {
        let total = self.network_calls + self.cache_hits;
        (total > 0).then(|| self.cache_hits as f64 / total as f64)
    }
}

/// Filesystem-safe form of a model name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

/// Artifact paths under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn split(&self, domain: &Domain, part: &str) -> PathBuf {
        self.root.join("splits").join(domain.key()).join(format!("{part}.jsonl"))
    }

    pub fn probe(&self, domain: &Domain, model: &str) -> PathBuf {
        self.root.join("probe").join(domain.key()).join(format!("{}.jsonl", file_stem(model)))
    }

    pub fn dataset(&self, domain: &Domain, model: &str, name: &str) -> PathBuf {
        self.root
            .join("datasets")
            .join(domain.key())
            .join(file_stem(model))
            .join(format!("{name}.jsonl"))
    }

    pub fn eval(&self, domain: &Domain, model: &str, mode: EvalMode) -> PathBuf {
        self.root
            .join("eval")
            .join(domain.key())
            .join(format!("{}__{mode}.jsonl", file_stem(model)))
    }

    pub fn analysis(&self, file: &str) -> PathBuf {
        self.root.join("analysis").join(file)
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.json"))
    }

    pub fn error_manifest(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.errors.json"))
    }
}

/// Name of a mixed dataset file.
pub fn ratio_name(ratio: f64) -> String {
    format!("ratio-{ratio}")
}

struct Run {
    layout: Layout,
    manifest: Manifest,
    failures: Vec<FailureEntry>,
    clients: Vec<Arc<Client>>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn start(cfg: &RunConfig, command: &str) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Run {
            layout: Layout::new(cfg.output_root()),
            manifest: Manifest::new(command, cfg.hash(), cfg.seed),
            failures: Vec::new(),
            clients: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn client(&mut self, spec: BackendSpec, cache: &Arc<ResponseCache>) -> Result<Arc<Client>, PipelineError> {
        let c = Arc::new(Client::from_spec(spec, cache.clone())?);
        self.clients.push(c.clone());
        Ok(c)
    }

    fn output(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.manifest.output(&self.layout.root, path).map_err(io_at(path))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn input(&mut self, path: &Path, shown_as: &str) -> Result<(), PipelineError> {
        self.manifest.input(path, shown_as).map_err(io_at(path))
    }

    fn item_failures(&mut self, scope: &str, failures: &[ItemFailure]) {
        self.failures.extend(failures.iter().map(|f| FailureEntry {
            scope: scope.to_string(),
            item_id: Some(f.item_id.clone()),
            message: f.message.clone(),
        }));
    }

    fn finish(self) -> Result<Outcome, PipelineError> {
        let command = self.manifest.command.clone();
        let manifest_path = self.layout.manifest(&command);
        self.manifest.write(&manifest_path).map_err(io_at(&manifest_path))?;
        let err_path = self.layout.error_manifest(&command);
        let error_manifest = if self.failures.is_empty() {
            if err_path.exists() {
                std::fs::remove_file(&err_path).map_err(io_at(&err_path))?;
            }
            None
        } else {
            ErrorManifest {
                command: command.clone(),
                config_hash: self.manifest.config_hash.clone(),
                failures: self.failures.clone(),
            }
            .write(&err_path)
            .map_err(io_at(&err_path))?;
            Some(err_path)
        };
        let network_calls = self.clients.iter().map(|c| c.stats().network_calls()).sum();
        let cache_hits = self.clients.iter().map(|c| c.stats().cache_hits()).sum();
        let outcome = Outcome {
            command,
            manifest: manifest_path,
            error_manifest,
            failures: self.failures.len(),
            network_calls,
            cache_hits,
            outputs: self.outputs,
        };
        if let Some(ratio) = outcome.cache_hit_ratio() {
            tracing::info!(
                command = %outcome.command,
                network_calls,
                cache_hits,
                "cache hit ratio {:.1}%",
                ratio * 100.0
            );
        }
        Ok(outcome)
    }
}

fn response_cache(cfg: &RunConfig) -> Arc<ResponseCache> {
    Arc::new(match &cfg.cache_dir {
        Some(dir) => ResponseCache::on_disk(cfg.resolve(dir)),
        None => ResponseCache::in_memory(),
    })
}

fn require(path: &Path, step: &'static str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput {
            path: path.to_path_buf(),
            step,
        })
    }
}

fn read_split(layout: &Layout, domain: &Domain, part: &str) -> Result<Vec<McqItem>, PipelineError> {
    let path = layout.split(domain, part);
    require(&path, "probe")?;
    Ok(load_corpus(&path, CorpusFormat::NativeJsonl)?)
}

fn status_counts(records: &[ProbeRecord]) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::from([("harmonious", 0), ("incompatible", 0), ("uncertain", 0)]);
    for r in records {
        let key = match r.status {
            ProbeStatus::Harmonious => "harmonious",
            ProbeStatus::Incompatible => "incompatible",
            ProbeStatus::Uncertain => "uncertain",
        };
        *counts.get_mut(key).expect("known status") += 1;
    }
    counts
}

fn load_domain(cfg: &RunConfig, d: &DomainConfig) -> Result<Vec<McqItem>, PipelineError> {
    let path = cfg.resolve(&d.corpus);
    let options = LoadOptions {
        require_explanation: d.require_explanation,
    };
    Ok(load_corpus_with(&path, d.format, &options)?)
}

/// Splits every corpus and probes the training split with each base model.
pub fn cmd_probe(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    let mut run = Run::start(cfg, "probe")?;
    for d in &cfg.domains {
        let path = cfg.resolve(&d.corpus);
        if !path.exists() {
            return Err(PipelineError::CorpusNotFound(path));
        }
    }
    let cache = response_cache(cfg);
    let clients = cfg
        .models
        .iter()
        .map(|m| run.client(cfg.resolved_spec(m), &cache))
        .collect::<Result<Vec<_>, _>>()?;
    for d in &cfg.domains {
        let items = load_domain(cfg, d)?;
        run.input(&cfg.resolve(&d.corpus), &d.corpus.to_string_lossy())?;
        let seed = derive_seed(cfg.seed, &format!("split/{}", d.name));
        let split = split_corpus(&items, d.dev_n, d.test_n(), d.train_n(items.len()), seed)?;
        for (part, xs) in [("dev", &split.dev), ("test", &split.test), ("train", &split.train)] {
            let p = run.layout.split(&d.name, part);
            emit_corpus(xs, &p)?;
            run.output(&p)?;
        }
        run.manifest.detail(format!("split/{}", d.name), split.sizes());
        let demos = &split.dev[..cfg.shots];
        for client in &clients {
            let name = client.model_name().to_string();
            let probe = probe_corpus(client, &split.train, demos, &d.name, cfg.threshold)?;
            let p = run.layout.probe(&d.name, &name);
            write_jsonl(&p, &probe.records).map_err(io_at(&p))?;
            run.output(&p)?;
            run.manifest.detail(format!("status/{}/{}", d.name, name), status_counts(&probe.records));
            run.item_failures(&format!("probe/{}/{}", d.name, name), &probe.failures);
        }
    }
    run.finish()
}

/// Builds the per-setting datasets and the ratio mixes from probe records.
pub fn cmd_build(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    let mut run = Run::start(cfg, "build")?;
    let cache = response_cache(cfg);
    let gen = GenerationConfig::default();
    let external = match &cfg.explainer {
        Some(spec) => Some(run.client(cfg.resolved_spec(spec), &cache)?),
        None => None,
    };
    let general = match &cfg.general_data_path {
        Some(p) => {
            let path = cfg.resolve(p);
            require(&path, "general data")?;
            run.input(&path, &p.to_string_lossy())?;
            load_general(&path).map_err(|source| PipelineError::Intervention {
                scope: "general data".into(),
                source,
            })?
        }
        None => Vec::new(),
    };
    for d in &cfg.domains {
        let train = read_split(&run.layout, &d.name, "train")?;
        for spec in &cfg.models {
            let name = spec.model_name.clone();
            let scope = format!("build/{}/{}", d.name, name);
            let wrap = |source| PipelineError::Intervention {
                scope: scope.clone(),
                source,
            };
            let probe_path = run.layout.probe(&d.name, &name);
            require(&probe_path, "probe")?;
            let records: Vec<ProbeRecord> = read_jsonl(&probe_path).map_err(|e| PipelineError::Io {
                path: probe_path.clone(),
                message: e.to_string(),
            })?;
            let groups = partition_by_status(&records, &train).map_err(wrap)?;
            let n = equal_size(&groups, cfg.n_per_setting).map_err(wrap)?;
            let base = run.client(cfg.resolved_spec(spec), &cache)?;
            let explainer = Explainer {
                base: &base,
                external: external.as_deref().unwrap_or(&base),
                config: &gen,
            };
            let seed = derive_seed(cfg.seed, &scope);
            let built = |setting: Setting, group| {
                build_setting_dataset(setting, group, n, seed, &explainer).map_err(wrap)
            };
            let har = built(Setting::Harmonious, &groups.harmonious)?;
            let inc = built(Setting::Incompatible, &groups.incompatible)?;
            let sa = built(Setting::SelfAligning, &groups.incompatible)?;
            let ctx = built(Setting::Contextualized, &groups.incompatible)?;

            let mut files: Vec<(String, Vec<IftExample>)> = vec![
                (Setting::Harmonious.key().into(), har),
                (Setting::Incompatible.key().into(), inc.clone()),
                (Setting::SelfAligning.key().into(), sa.clone()),
                (Setting::Contextualized.key().into(), ctx),
            ];
            for &ratio in &cfg.ratio_grid {
                let spec = MixSpec {
                    general_blend: cfg.general_blend,
                    ..MixSpec::new(ratio, seed)
                };
                files.push((ratio_name(ratio), mix_ratio(&inc, &sa, &spec).map_err(wrap)?));
            }
            let mut sizes = BTreeMap::new();
            let mut flagged = BTreeMap::new();
            for (file, examples) in files {
                let examples = if general.is_empty() {
                    examples
                } else {
                    blend_general(&examples, &general, cfg.general_blend, seed).map_err(wrap)?
                };
                let p = run.layout.dataset(&d.name, &name, &file);
                emit_ift_file(&examples, &p, cfg.dataset_format, &cfg.chat_template).map_err(wrap)?;
                run.output(&p)?;
                flagged.insert(file.clone(), examples.iter().filter(|e| e.flagged).count());
                sizes.insert(file, examples.len());
            }
            let (h, i, u) = groups.sizes();
            run.manifest.detail(
                format!("groups/{}/{}", d.name, name),
                BTreeMap::from([("harmonious", h), ("incompatible", i), ("uncertain", u), ("per_setting", n)]),
            );
            run.manifest.detail(format!("sizes/{}/{}", d.name, name), sizes);
            run.manifest.detail(format!("flagged/{}/{}", d.name, name), flagged);
        }
    }
    run.finish()
}

fn eval_suite_for(cfg: &RunConfig, layout: &Layout, d: &DomainConfig, run: &mut Run) -> Result<crate::corpus::EvalSuite, PipelineError> {
    let test = read_split(layout, &d.name, "test")?;
    let external = match &cfg.external_benchmark {
        Some(dir) => {
            let path = cfg.resolve(dir);
            require(&path, "external benchmark")?;
            load_mmlu_dir(&path)?
        }
        None => Vec::new(),
    };
    let splits = match &cfg.subcategory_splits {
        Some(p) => {
            let path = cfg.resolve(p);
            run.input(&path, &p.to_string_lossy())?;
            SubcategorySplits::from_toml_file(&path)?
        }
        None => SubcategorySplits::default(),
    };
    Ok(build_eval_suite(&d.name, test, &external, &splits, cfg.strict_subcategories)?)
}

/// Scores base models in-context and tuned models zero-shot on every suite.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    let mut run = Run::start(cfg, "eval")?;
    let cache = response_cache(cfg);
    for d in &cfg.domains {
        let layout = run.layout.clone();
        let suite = eval_suite_for(cfg, &layout, d, &mut run)?;
        let dev = read_split(&layout, &d.name, "dev")?;
        let demos = &dev[..cfg.shots];
        let jobs = cfg
            .models
            .iter()
            .map(|m| (m, EvalMode::Icl(cfg.shots)))
            .chain(
                cfg.tuned
                    .iter()
                    .filter(|t| t.domain == d.name)
                    .map(|t| (&t.backend, EvalMode::ZeroShot)),
            );
        for (spec, mode) in jobs {
            let client = run.client(cfg.resolved_spec(spec), &cache)?;
            let result = evaluate(&client, &suite, mode, demos)?;
            let p = layout.eval(&d.name, &spec.model_name, mode);
            write_eval_file(&result.results, &p)?;
            run.output(&p)?;
            let acc: BTreeMap<&str, f64> = result
                .results
                .iter()
                .map(|r| (r.suite_kind.key(), r.accuracy))
                .collect();
            run.manifest.detail(format!("accuracy/{}/{}/{mode}", d.name, spec.model_name), acc);
            run.item_failures(&format!("eval/{}/{}", d.name, spec.model_name), &result.failures);
        }
    }
    run.finish()
}

/// Per-model, pooled and skipped fleet groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetFile {
    pub per_model: Vec<FleetAnalysis>,
    pub pooled: Vec<FleetAnalysis>,
    pub skipped: Vec<SkippedGroup>,
}

impl FleetFile {
    pub fn from_reports(reports: &[ConsistencyReport]) -> Self {
        let (per_model, mut skipped) = fleet_analysis(reports, &["model", "suite"]);
        let (pooled, skipped_pooled) = fleet_analysis(reports, &["suite"]);
        skipped.extend(skipped_pooled);
        FleetFile {
            per_model,
            pooled,
            skipped,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(io_at(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, step: &'static str) -> Result<T, PipelineError> {
    require(path, step)?;
    let text = std::fs::read(path).map_err(io_at(path))?;
    serde_json::from_slice(&text).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes reports, fleet analyses and scatter data under `analysis/`.
fn write_analysis(run: &mut Run, reports: &[ConsistencyReport]) -> Result<FleetFile, PipelineError> {
    let layout = run.layout.clone();
    let p = layout.analysis("reports.jsonl");
    write_jsonl(&p, reports).map_err(io_at(&p))?;
    run.output(&p)?;
    let fleet = FleetFile::from_reports(reports);
    let p = layout.analysis("fleet.json");
    write_json(&p, &fleet)?;
    run.output(&p)?;
    let p = layout.analysis("scatter.csv");
    write_scatter(&fleet.per_model, &p)?;
    run.output(&p)?;
    Ok(fleet)
}

/// Pairs each tuned model with its base model's in-context results.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    let mut run = Run::start(cfg, "analyze")?;
    let mut reports = Vec::new();
    for t in &cfg.tuned {
        let base_path = run.layout.eval(&t.domain, &t.base_model, EvalMode::Icl(cfg.shots));
        let tuned_path = run.layout.eval(&t.domain, &t.backend.model_name, EvalMode::ZeroShot);
        require(&base_path, "eval")?;
        require(&tuned_path, "eval")?;
        let base = read_eval_file(&base_path)?;
        let tuned = read_eval_file(&tuned_path)?;
        for tr in &tuned {
            let Some(br) = base.iter().find(|b| b.suite_kind == tr.suite_kind) else {
                tracing::warn!(tuned = %tr.model_name, suite = %tr.suite_kind, "no base results for suite");
                continue;
            };
            let mut rep = consistency_report(br, tr, DEFAULT_KL_EPSILON)?;
            rep.labels.insert(DOMAIN_LABEL.into(), t.domain.key().to_string());
            rep.labels.insert(SETTING_LABEL.into(), t.setting.clone());
            if let Some(r) = t.ratio {
                rep.labels.insert(RATIO_LABEL.into(), r.to_string());
            }
            reports.push(rep);
        }
    }
    let fleet = write_analysis(&mut run, &reports)?;
    run.manifest.detail("fleet_groups", fleet.per_model.len() + fleet.pooled.len());
    run.manifest.detail("skipped_groups", fleet.skipped.len());
    run.finish()
}

/// The three summary tables of one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    pub accuracy: AccuracyTable,
    pub correlation: CorrelationTable,
    pub divergence: DivergenceTable,
}

impl Tables {
    pub fn new(reports: &[ConsistencyReport], fleet: &FleetFile) -> Self {
        Tables {
            accuracy: AccuracyTable::from_reports(reports),
            correlation: CorrelationTable::new(&fleet.per_model, &fleet.pooled),
            divergence: DivergenceTable::from_reports(reports),
        }
    }

    pub fn to_markdown(&self) -> String {
        render_report(&self.accuracy, &self.correlation, &self.divergence)
    }
}

fn write_tables(run: &mut Run, dir: &Path, tables: &Tables) -> Result<(), PipelineError> {
    let p = dir.join("tables.md");
    write_atomic(&p, tables.to_markdown().as_bytes()).map_err(io_at(&p))?;
    run.output(&p)?;
    let p = dir.join("tables.json");
    write_json(&p, tables)?;
    run.output(&p)
}

/// Renders the summary tables from the analysis outputs.
pub fn cmd_report(cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    let mut run = Run::start(cfg, "report")?;
    let reports_path = run.layout.analysis("reports.jsonl");
    require(&reports_path, "analyze")?;
    let reports: Vec<ConsistencyReport> = read_jsonl(&reports_path).map_err(|e| PipelineError::Io {
        path: reports_path.clone(),
        message: e.to_string(),
    })?;
    let fleet: FleetFile = read_json(&run.layout.analysis("fleet.json"), "analyze")?;
    let dir = run.layout.root.join("analysis");
    write_tables(&mut run, &dir, &Tables::new(&reports, &fleet))?;
    run.finish()
}

/// Runs the toy study and writes its artifacts under `<out>/simulation`.
pub fn cmd_simulate(study: &StudyConfig, out: &Path) -> Result<Outcome, PipelineError> {
    let hash = sha256_hex(serde_json::to_vec(study).expect("study config serializes"));
    let dir = out.join("simulation");
    let mut run = Run {
        layout: Layout::new(out),
        manifest: Manifest::new("simulate", hash, study.seed),
        failures: Vec::new(),
        clients: Vec::new(),
        outputs: Vec::new(),
    };
    let output = run_synthetic_study(study)?;
    run.manifest.detail("study", study);
    let p = dir.join("reports.jsonl");
    write_jsonl(&p, &output.reports).map_err(io_at(&p))?;
    run.output(&p)?;
    let p = dir.join("kl_ordering.jsonl");
    write_jsonl(&p, &output.kl_ordering).map_err(io_at(&p))?;
    run.output(&p)?;
    let fleet = FleetFile::from_reports(&output.reports);
    let p = dir.join("fleet.json");
    write_json(&p, &fleet)?;
    run.output(&p)?;
    let p = dir.join("scatter.csv");
    write_scatter(&fleet.per_model, &p)?;
    run.output(&p)?;
    write_tables(&mut run, &dir, &Tables::new(&output.reports, &fleet))?;
    run.finish()
}

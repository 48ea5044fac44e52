//! Deterministic toy substrate: models as per-item choice tables and
//! fine-tuning as a convex mixture toward the trained answer.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    consistency_report, fleet_analysis, kl_divergence, tables, ConsistencyReport, FleetAnalysis,
    SkippedGroup, DEFAULT_KL_EPSILON,
};
use crate::backend::{
    BackendError, BackendKind, BackendSpec, Client, GenerateParams, RawCompletion, RawScore,
    ResponseCache, ScoreBody, Transport,
};
use crate::choice::{ChoiceDistribution, Letter};
use crate::corpus::{Domain, EvalSuite, McqItem};
use crate::evaluation::{evaluate, EvalMode, EvalResult};
use crate::intervention::{
    build_setting_dataset, mix_ratio, partition_by_status, Explainer, GenerationConfig, IftExample,
    InterventionError, MixSpec, Setting,
};
use crate::probing::{probe_corpus, DEFAULT_SHOTS, DEFAULT_THRESHOLD};
use crate::prompts::{demo_count, target_question};
use crate::util::{derive_seed, rng, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub name: String,
    pub table: BTreeMap<String, ChoiceDistribution>,
    /// Temperature of the in-context view; 1 leaves the table unchanged.
    pub icl_sharpening: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("toy model has no entry for item {0}")]
    UnknownItem(String),
    #[error("{0}")]
    Parameter(String),
    #[error("could not generate non-degenerate groups after {0} attempts")]
    Degenerate(u32),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error("{0}")]
    Pipeline(String),
}

impl ToyModel {
    pub fn new(name: impl Into<String>, table: BTreeMap<String, ChoiceDistribution>) -> Self {
        ToyModel {
            name: name.into(),
            table,
            icl_sharpening: 1.0,
        }
    }

    /// Distribution the model shows under in-context prompting:
    /// `softmax(ln p / τ)`, the argmax one-hot at τ = 0.
    pub fn probe_view(&self, item_id: &str) -> Option<ChoiceDistribution> {
        let p = self.table.get(item_id)?;
        let tau = self.icl_sharpening;
        if tau == 1.0 {
            return Some(p.clone());
        }
        if tau == 0.0 {
            return ChoiceDistribution::one_hot(p.len(), p.argmax()).ok();
        }
        let logits: Vec<f64> = p.probs().iter().map(|v| v.ln() / tau).collect();
        ChoiceDistribution::from_log_probs(&logits).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyFinetuneSpec {
    pub alpha: f64,
    pub dataset: Vec<IftExample>,
    pub seed: u64,
}

/// Moves every trained item toward its trained answer:
/// `(1 − α)·old + α·onehot(answer)`. General examples are ignored.
pub fn toy_finetune(model: &ToyModel, spec: &ToyFinetuneSpec) -> Result<ToyModel, SimulationError> {
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(SimulationError::Parameter(format!("alpha {} outside [0, 1]", spec.alpha)));
    }
    let a = spec.alpha;
    let mut table = model.table.clone();
    for ex in &spec.dataset {
        let (Some(id), Some(answer)) = (&ex.source_item_id, ex.answer_letter) else {
            continue;
        };
        let old = table
            .get(id)
            .ok_or_else(|| SimulationError::UnknownItem(id.clone()))?;
        if answer.index() >= old.len() {
            return Err(SimulationError::Parameter(format!("answer {answer} outside item {id}")));
        }
        let mixed: Vec<f64> = old
            .iter()
            .map(|(l, p)| (1.0 - a) * p + if l == answer { a } else { 0.0 })
            .collect();
        let updated = ChoiceDistribution::new(mixed)
            .map_err(|e| SimulationError::Parameter(format!("item {id}: {e}")))?;
        table.insert(id.clone(), updated);
    }
    Ok(ToyModel {
        name: format!("{}-ft{}", model.name, &sha256_hex(format!("{a}:{}", spec.seed))[..6]),
        table,
        icl_sharpening: model.icl_sharpening,
    })
}

/// In-process transport answering from a [`ToyModel`]. Prompts with
/// demonstrations see the in-context view, others the plain table.
pub struct ToySimTransport {
    model: Arc<ToyModel>,
    by_question: HashMap<String, String>,
}

impl ToySimTransport {
    pub fn new(model: Arc<ToyModel>, items: &[McqItem]) -> Self {
        ToySimTransport {
            model,
            by_question: items
                .iter()
                .map(|it| (it.question.clone(), it.id.clone()))
                .collect(),
        }
    }

    pub fn client(model: ToyModel, items: &[McqItem]) -> Client {
        let spec = BackendSpec {
            max_in_flight: 1,
            ..BackendSpec::new(BackendKind::ToySim, model.name.clone())
        };
        Client::with_transport(
            spec,
            Arc::new(ToySimTransport::new(Arc::new(model), items)),
            Arc::new(ResponseCache::disabled()),
        )
        .expect("toy spec is valid")
    }
}

impl Transport for ToySimTransport {
    fn score(&self, prompt: &str, letters: &[Letter], _top_k: u32) -> Result<RawScore, BackendError> {
        let q = target_question(prompt)
            .ok_or_else(|| BackendError::Malformed("no target question in prompt".into()))?;
        let id = self
            .by_question
            .get(q)
            .ok_or_else(|| BackendError::Malformed(format!("unknown toy question {q:?}")))?;
        let dist = if demo_count(prompt) > 0 {
            self.model.probe_view(id)
        } else {
            self.model.table.get(id).cloned()
        }
        .ok_or_else(|| BackendError::Malformed(format!("toy model lacks item {id}")))?;
        if dist.len() != letters.len() {
            return Err(BackendError::LettersMismatch {
                expected: letters.iter().map(|l| l.as_char()).collect(),
                got: format!("{} toy choices", dist.len()),
            });
        }
        Ok(RawScore {
            raw: json!({"toy": self.model.name, "item": id}),
            body: ScoreBody::Direct(dist.probs().to_vec()),
        })
    }

    fn complete(&self, prompt: &str, _params: &GenerateParams) -> Result<RawCompletion, BackendError> {
        let text = format!("Toy rationale {}.", &sha256_hex(prompt)[..8]);
        Ok(RawCompletion {
            raw: json!({"toy": self.model.name}),
            text,
            finish_reason: Some("stop".into()),
        })
    }
}

fn default_n_models() -> usize {
    4
}
fn default_kl_alphas() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_items: usize,
    pub n_choices: usize,
    pub ratio_grid: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_n_models")]
    pub n_models: usize,
    /// Fine-tuning strengths for the per-item KL comparison.
    #[serde(default = "default_kl_alphas")]
    pub kl_alphas: Vec<f64>,
}

impl StudyConfig {
    pub fn new(n_items: usize, ratio_grid: Vec<f64>, alpha: f64, seed: u64) -> Self {
        StudyConfig {
            n_items,
            n_choices: 4,
            ratio_grid,
            alpha,
            seed,
            n_models: default_n_models(),
            kl_alphas: default_kl_alphas(),
        }
    }
}

/// Per-item KL of the self-aligning and incompatible fine-tunes from the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlComparison {
    pub model: String,
    pub alpha: f64,
    pub item_id: String,
    pub self_aligning: f64,
    pub incompatible: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub reports: Vec<ConsistencyReport>,
    pub fleet: Vec<FleetAnalysis>,
    pub skipped: Vec<SkippedGroup>,
    pub kl_ordering: Vec<KlComparison>,
}

const DEV_N: usize = 5;
const MIN_INCOMPATIBLE: usize = 4;
const MAX_ATTEMPTS: u32 = 8;

fn ratio_label(r: f64) -> String {
    format!("{r}")
}

fn random_distribution(r: &mut impl Rng, n: usize, top: usize, uncertain: bool) -> ChoiceDistribution {
    let floor = 1.0 / n as f64 + 0.02;
    let pmax = if uncertain && floor < 0.5 {
        r.random_range(floor.max(0.3)..0.5)
    } else {
        r.random_range(0.55..0.95)
    };
    let rest = 1.0 - pmax;
    let mut others: Vec<f64> = (0..n - 1).map(|_| r.random_range(0.2..1.0)).collect();
    let s: f64 = others.iter().sum();
    others.iter_mut().for_each(|w| *w *= rest / s);
    if others.iter().any(|&w| w >= pmax) {
        others = vec![rest / (n - 1) as f64; n - 1];
    }
    let mut probs = others;
    probs.insert(top, pmax);
    ChoiceDistribution::from_weights(probs).expect("positive weights")
}

fn synthetic_corpus(cfg: &StudyConfig, seed: u64) -> Vec<McqItem> {
    let mut r = rng(derive_seed(seed, "corpus"));
    (0..cfg.n_items)
        .map(|i| {
            let id = format!("toy-{i:04}");
            McqItem {
                question: format!("Toy question {i}?"),
                choices: (0..cfg.n_choices).map(|j| format!("answer {j} to toy {i}")).collect(),
                gold: Letter::from_index(r.random_range(0..cfg.n_choices)).expect("letter"),
                explanation: None,
                domain: Domain::Other("toy".into()),
                id,
            }
        })
        .collect()
}

/// Base models of increasing strength: each item's top letter is the gold
/// with probability between 0.35 and 0.65, and one item in five is
/// low-confidence.
fn synthetic_models(cfg: &StudyConfig, items: &[McqItem], seed: u64) -> Vec<ToyModel> {
    (0..cfg.n_models)
        .map(|m| {
            let strength = if cfg.n_models > 1 {
                0.35 + 0.3 * m as f64 / (cfg.n_models - 1) as f64
            } else {
                0.5
            };
            let mut r = rng(derive_seed(seed, &format!("model{m}")));
            let table = items
                .iter()
                .map(|it| {
                    let n = it.choices.len();
                    let top = if r.random_bool(strength) {
                        it.gold.index()
                    } else {
                        (it.gold.index() + r.random_range(1..n)) % n
                    };
                    let uncertain = r.random_bool(0.2);
                    (it.id.clone(), random_distribution(&mut r, n, top, uncertain))
                })
                .collect();
            ToyModel::new(format!("toy{m}"), table)
        })
        .collect()
}

fn pipeline_err(e: impl std::fmt::Display) -> SimulationError {
    SimulationError::Pipeline(e.to_string())
}

fn evaluate_toy(model: ToyModel, items: &[McqItem], suite: &EvalSuite, mode: EvalMode, demos: &[McqItem]) -> Result<Vec<EvalResult>, SimulationError> {
    let client = ToySimTransport::client(model, items);
    let run = evaluate(&client, suite, mode, demos).map_err(pipeline_err)?;
    if let Some(f) = run.failures.first() {
        return Err(pipeline_err(format!("item {}: {}", f.item_id, f.message)));
    }
    Ok(run.results)
}

fn per_item_kl(base: &ToyModel, tuned: &ToyModel, ids: &[String]) -> Result<Vec<f64>, SimulationError> {
    ids.iter()
        .map(|id| {
            kl_divergence(&tuned.table[id], &base.table[id], DEFAULT_KL_EPSILON).map_err(pipeline_err)
        })
        .collect()
}

/// Probe, partition, build, mix, fine-tune, evaluate and analyse a fleet of
/// toy models over the ratio grid. Suites: HOMO holds the trained queries,
/// ID the untrained training items, OOD the held-out items.
pub fn run_synthetic_study(cfg: &StudyConfig) -> Result<StudyOutput, SimulationError> {
    if cfg.n_items < 20 {
        return Err(SimulationError::Parameter(format!("n_items must be at least 20, got {}", cfg.n_items)));
    }
    if !(2..=5).contains(&cfg.n_choices) {
        return Err(SimulationError::Parameter(format!("n_choices must be 2 to 5, got {}", cfg.n_choices)));
    }
    if cfg.ratio_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(SimulationError::Parameter("ratios must lie in [0, 1]".into()));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let seed = derive_seed(cfg.seed, &format!("attempt{attempt}"));
        match study_once(cfg, seed)? {
            Some(out) => return Ok(out),
            None => tracing::warn!(attempt, "degenerate toy groups; regenerating"),
        }
    }
    Err(SimulationError::Degenerate(MAX_ATTEMPTS))
}

fn study_once(cfg: &StudyConfig, seed: u64) -> Result<Option<StudyOutput>, SimulationError> {
    let items = synthetic_corpus(cfg, seed);
    let domain = Domain::Other("toy".into());
    let split = crate::corpus::split_corpus(&items, DEV_N, cfg.n_items / 5, cfg.n_items - DEV_N - cfg.n_items / 5, seed)
        .map_err(pipeline_err)?;
    let demos = &split.dev[..DEFAULT_SHOTS.min(split.dev.len())];
    let models = synthetic_models(cfg, &items, seed);
    let gen = GenerationConfig::default();

    let mut plans = Vec::new();
    for base in &models {
        let client = ToySimTransport::client(base.clone(), &items);
        let run = probe_corpus(&client, &split.train, demos, &domain, DEFAULT_THRESHOLD).map_err(pipeline_err)?;
        let groups = partition_by_status(&run.records, &split.train)?;
        let n = groups.incompatible.len();
        if n < MIN_INCOMPATIBLE {
            return Ok(None);
        }
        let explainer = Explainer {
            base: &client,
            external: &client,
            config: &gen,
        };
        let inc = build_setting_dataset(Setting::Incompatible, &groups.incompatible, n, seed, &explainer)?;
        let sa = build_setting_dataset(Setting::SelfAligning, &groups.incompatible, n, seed, &explainer)?;
        plans.push((base, inc, sa));
    }

    let mut reports = Vec::new();
    let mut kl_ordering = Vec::new();
    for (base, inc, sa) in &plans {
        let trained: Vec<String> = inc.iter().filter_map(|e| e.source_item_id.clone()).collect();
        let trained_set: std::collections::HashSet<&str> = trained.iter().map(String::as_str).collect();
        let suite = EvalSuite {
            domain: domain.clone(),
            homo: split.train.iter().filter(|it| trained_set.contains(it.id.as_str())).cloned().collect(),
            in_domain: split.train.iter().filter(|it| !trained_set.contains(it.id.as_str())).cloned().collect(),
            out_of_domain: split.test.clone(),
        };
        let base_results = evaluate_toy((*base).clone(), &items, &suite, EvalMode::Icl(demos.len()), demos)?;

        for &ratio in &cfg.ratio_grid {
            let mixed = mix_ratio(inc, sa, &MixSpec::new(ratio, seed))?;
            let tuned = toy_finetune(
                base,
                &ToyFinetuneSpec {
                    alpha: cfg.alpha,
                    dataset: mixed,
                    seed,
                },
            )?;
            let tuned = ToyModel {
                name: format!("{}-r{}", base.name, ratio_label(ratio)),
                ..tuned
            };
            let tuned_results = evaluate_toy(tuned, &items, &suite, EvalMode::ZeroShot, demos)?;
            let setting = if ratio == 0.0 {
                "incompatible"
            } else if ratio == 1.0 {
                "self_aligning"
            } else {
                "mix"
            };
            for (b, t) in base_results.iter().zip(&tuned_results) {
                let mut rep = consistency_report(b, t, DEFAULT_KL_EPSILON).map_err(pipeline_err)?;
                rep.labels.insert(tables::DOMAIN_LABEL.into(), domain.key().to_string());
                rep.labels.insert(tables::SETTING_LABEL.into(), setting.into());
                rep.labels.insert(tables::RATIO_LABEL.into(), ratio_label(ratio));
                reports.push(rep);
            }
        }

        for &alpha in &cfg.kl_alphas {
            let ft = |ds: &Vec<IftExample>| {
                toy_finetune(
                    base,
                    &ToyFinetuneSpec {
                        alpha,
                        dataset: ds.clone(),
                        seed,
                    },
                )
            };
            let kl_sa = per_item_kl(base, &ft(sa)?, &trained)?;
            let kl_inc = per_item_kl(base, &ft(inc)?, &trained)?;
            for ((id, s), i) in trained.iter().zip(kl_sa).zip(kl_inc) {
                kl_ordering.push(KlComparison {
                    model: base.name.clone(),
                    alpha,
                    item_id: id.clone(),
                    self_aligning: s,
                    incompatible: i,
                });
            }
        }
    }

    let (fleet, skipped) = fleet_analysis(&reports, &["model", "suite"]);
    Ok(Some(StudyOutput {
        reports,
        fleet,
        skipped,
        kl_ordering,
    }))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::intervention::ExplanationOrigin;

    fn d(p: &[f64]) -> ChoiceDistribution {
        ChoiceDistribution::new(p.to_vec()).unwrap()
    }

    fn model() -> ToyModel {
        ToyModel::new(
            "m",
            [("a".to_string(), d(&[0.6, 0.3, 0.1])), ("b".to_string(), d(&[0.2, 0.8]))]
                .into_iter()
                .collect(),
        )
    }

    fn example(id: &str, letter: char, setting: Setting) -> IftExample {
        IftExample {
            instruction: id.into(),
            response: letter.to_string(),
            setting,
            source_item_id: Some(id.into()),
            answer_letter: Letter::from_char(letter),
            explanation_origin: ExplanationOrigin::None,
            flagged: false,
        }
    }

    fn ft(m: &ToyModel, alpha: f64, ds: Vec<IftExample>) -> ToyModel {
        toy_finetune(m, &ToyFinetuneSpec { alpha, dataset: ds, seed: 0 }).unwrap()
    }

    #[test]
    fn alpha_extremes() {
        let m = model();
        let ds = vec![example("a", 'C', Setting::Incompatible), IftExample::general("g", "x")];
        assert_eq!(ft(&m, 0.0, ds.clone()).table, m.table);
        let one = ft(&m, 1.0, ds);
        assert_eq!(one.table["a"].probs(), &[0.0, 0.0, 1.0]);
        assert_eq!(one.table["b"], m.table["b"]);
    }

    #[test]
    fn unknown_item_is_an_error() {
        let err = toy_finetune(
            &model(),
            &ToyFinetuneSpec { alpha: 0.5, dataset: vec![example("zz", 'A', Setting::Incompatible)], seed: 0 },
        )
        .unwrap_err();
        assert!(matches!(err, SimulationError::UnknownItem(_)));
    }

    #[test]
    fn probe_view_tempering() {
        let mut m = model();
        assert_eq!(m.probe_view("a").unwrap(), m.table["a"]);
        m.icl_sharpening = 0.5;
        let v = m.probe_view("a").unwrap();
        let z = 0.36 + 0.09 + 0.01;
        assert!((v.probs()[0] - 0.36 / z).abs() < 1e-12);
        m.icl_sharpening = 0.0;
        assert_eq!(m.probe_view("a").unwrap().probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn small_study_is_deterministic_and_consistent_at_alpha_zero() {
        let cfg = StudyConfig::new(60, vec![0.0, 0.5, 1.0], 0.0, 7);
        let a = run_synthetic_study(&cfg).unwrap();
        let b = run_synthetic_study(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(!a.reports.is_empty());
        for r in &a.reports {
            assert_eq!(r.mean_rank_corr, Some(1.0));
            assert_eq!(r.mean_kl, 0.0);
        }
    }

    #[test]
    fn study_rejects_tiny_corpora() {
        assert!(run_synthetic_study(&StudyConfig::new(10, vec![0.0], 0.5, 1)).is_err());
    }

    proptest! {
        #[test]
        fn finetune_keeps_normalization_and_self_aligning_argmax(
            w in prop::collection::vec(0.05f64..1.0, 2..=5),
            alpha in 0.0f64..=1.0,
            other in 0usize..5,
        ) {
            let p = ChoiceDistribution::from_weights(w).unwrap();
            let top = p.argmax();
            let m = ToyModel::new("m", [("a".to_string(), p.clone())].into_iter().collect());
            let sa = ft(&m, alpha, vec![example("a", top.as_char(), Setting::SelfAligning)]);
            let q = &sa.table["a"];
            prop_assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(q.argmax(), top);
            let wrong = Letter::from_index((top.index() + 1 + other % (p.len() - 1)) % p.len()).unwrap();
            let inc = ft(&m, alpha, vec![example("a", wrong.as_char(), Setting::Incompatible)]);
            let k_sa = kl_divergence(q, &p, DEFAULT_KL_EPSILON).unwrap();
            let k_inc = kl_divergence(&inc.table["a"], &p, DEFAULT_KL_EPSILON).unwrap();
            prop_assert!(k_sa <= k_inc + 1e-12, "{} > {}", k_sa, k_inc);
        }
    }
}

//! Acceptance suite: one PASS/FAIL line per primary criterion. Runs without
//! the libtest harness so the lines always reach the console; any failure
//! makes the process exit non-zero.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use iftkit::analysis::{kl_divergence, rank_correlation, spearman_partial};
use iftkit::backend::{BackendSpec, Client, MockGeneration, MockSpec, ResponseCache};
use iftkit::choice::{ChoiceDistribution, Letter};
use iftkit::config::RunConfig;
use iftkit::corpus::{Domain, McqItem};
use iftkit::intervention::{
    build_setting_dataset, equal_size, mix_ratio, partition_by_status, Explainer, ExplanationOrigin,
    GenerationConfig, IftExample, MixSpec, Probed, Setting,
};
use iftkit::pipeline;
use iftkit::probing::ProbeRecord;
use iftkit::simulation::{run_synthetic_study, StudyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Check {
    ensure((a - b).abs() <= tol, || format!("{what}: {a} vs oracle {b}"))
}

// Independent oracles.

/// Ranks 1..n of distinct values by counting smaller elements.
fn distinct_ranks(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect()
}

/// 1 − 6Σd² / (n(n² − 1)), valid for distinct values.
fn closed_form_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (distinct_ranks(x), distinct_ranks(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn direct_kl(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let k = p.len() as f64;
    let mut total = 0.0;
    for i in 0..p.len() {
        let a = (p[i] + eps) / (1.0 + k * eps);
        let b = (q[i] + eps) / (1.0 + k * eps);
        if a > 0.0 {
            total += a * (a / b).ln();
        }
    }
    total
}

/// Residuals of `y` after least-squares regression on `x`.
fn residuals(y: &[f64], x: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    y.iter().zip(x).map(|(b, a)| b - (intercept + slope * a)).collect()
}

fn cosine_of_centred(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let da: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>().sqrt();
    let db: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>().sqrt();
    num / (da * db)
}

fn regression_partial(x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let (rx, ry, rz) = (distinct_ranks(x), distinct_ranks(y), distinct_ranks(z));
    cosine_of_centred(&residuals(&rx, &rz), &residuals(&ry, &rz))
}

fn random_dist(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn all_distinct(v: &[f64]) -> bool {
    (0..v.len()).all(|i| (0..i).all(|j| v[i] != v[j]))
}

/// Whether `a` and `b` have identical or exactly reversed ranks, leaving
/// nothing to partial out.
fn monotone_in(a: &[f64], b: &[f64]) -> bool {
    let (ra, rb) = (distinct_ranks(a), distinct_ranks(b));
    let n = a.len() as f64 + 1.0;
    ra == rb || ra.iter().zip(&rb).all(|(x, y)| x + y == n)
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut fixtures = 0;
    while fixtures < 1000 {
        let k = rng.random_range(2..=5);
        let (p, q) = (random_dist(&mut rng, k), random_dist(&mut rng, k));
        if !all_distinct(&p) || !all_distinct(&q) {
            continue;
        }
        let (dp, dq) = (ChoiceDistribution::new(p.clone()).unwrap(), ChoiceDistribution::new(q.clone()).unwrap());
        let r = rank_correlation(&dp, &dq).map_err(|e| e.to_string())?.ok_or("undefined correlation")?;
        close(r, closed_form_spearman(&p, &q), 1e-9, "rank_correlation")?;
        for eps in [0.0, 1e-10, 1e-3] {
            let kl = kl_divergence(&dp, &dq, eps).map_err(|e| e.to_string())?;
            close(kl, direct_kl(&p, &q, eps), 1e-9, "kl_divergence")?;
        }

        let n = rng.random_range(5..=15);
        let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random::<f64>()).collect();
        let z: Vec<f64> = x.iter().map(|v| v * 0.5 + rng.random::<f64>()).collect();
        if ![&x, &y, &z].iter().all(|v| all_distinct(v)) || monotone_in(&z, &x) || monotone_in(&z, &y) {
            continue;
        }
        let got = spearman_partial(&x, &y, &z).map_err(|e| e.to_string())?;
        close(got.r, regression_partial(&x, &y, &z), 1e-9, "spearman_partial")?;
        fixtures += 1;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))
}

fn spot_checks() -> Check {
    let weights = |w: &[f64]| ChoiceDistribution::from_weights(w.to_vec()).unwrap();
    let r = rank_correlation(&weights(&[1.0, 2.0, 3.0, 4.0]), &weights(&[2.0, 1.0, 3.0, 4.0]))
        .map_err(|e| e.to_string())?
        .ok_or("undefined")?;
    close(r, 0.8, 1e-12, "ranks (1,2,3,4) vs (2,1,3,4)")?;
    let half = weights(&[0.5, 0.5]);
    let kl = kl_divergence(&half, &weights(&[0.25, 0.75]), 0.0).map_err(|e| e.to_string())?;
    close(kl, 0.1438, 5e-5, "KL((0.5,0.5)||(0.25,0.75))")?;
    let p = weights(&[0.1, 0.6, 0.3]);
    ensure(rank_correlation(&p, &p).unwrap() == Some(1.0), || "identity correlation".into())?;
    ensure(kl_divergence(&p, &p, 1e-10).unwrap() == 0.0, || "identity KL".into())
}

fn prompt_goldens() -> Check {
    common::check_prompt_goldens()?;
    common::check_conversation_golden()
}

// Construction invariants.

fn mock_client(name: &str, generation: MockGeneration) -> Client {
    let spec = BackendSpec::mock(name, MockSpec { generation, ..MockSpec::default() });
    Client::from_spec(spec, Arc::new(ResponseCache::in_memory())).unwrap()
}

struct ProbeFixture {
    items: Vec<McqItem>,
    dists: Vec<ChoiceDistribution>,
}

fn probe_fixture(rng: &mut ChaCha8Rng, id: usize) -> ProbeFixture {
    let n = rng.random_range(4..=40);
    let mut items = Vec::new();
    let mut dists = Vec::new();
    for i in 0..n {
        let k = rng.random_range(2..=5);
        let sharp = rng.random_range(1.0..6.0);
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powf(sharp) + 1e-6).collect();
        dists.push(ChoiceDistribution::from_weights(w).unwrap());
        items.push(McqItem {
            id: format!("f{id}-{i}"),
            domain: Domain::History,
            question: format!("Fixture {id} question {i}?"),
            choices: (0..k).map(|j| format!("choice {j}")).collect(),
            gold: Letter::from_index(rng.random_range(0..k)).unwrap(),
            explanation: (i % 2 == 0).then(|| "Recorded fact.".to_string()),
        });
    }
    ProbeFixture { items, dists }
}

fn records(f: &ProbeFixture, threshold: f64) -> Vec<ProbeRecord> {
    f.items
        .iter()
        .zip(&f.dists)
        .map(|(it, d)| ProbeRecord::new(&it.id, "m", d.clone(), it.gold, threshold))
        .collect()
}

fn ids(group: &[Probed]) -> BTreeSet<String> {
    group.iter().map(|p| p.item.id.clone()).collect()
}

fn by_source(ds: &[IftExample]) -> BTreeMap<String, &IftExample> {
    ds.iter().map(|e| (e.source_item_id.clone().unwrap(), e)).collect()
}

/// Checks one fixture; reports whether it produced non-empty datasets.
fn one_fixture(f: &ProbeFixture, threshold: f64, seed: u64, ex: &Explainer<'_>) -> Result<bool, String> {
    let recs = records(f, threshold);
    let groups = partition_by_status(&recs, &f.items).map_err(|e| e.to_string())?;
    let (h, i, u) = groups.sizes();
    let all: BTreeSet<String> = f.items.iter().map(|it| it.id.clone()).collect();
    let union: BTreeSet<String> = ids(&groups.harmonious)
        .into_iter()
        .chain(ids(&groups.incompatible))
        .chain(ids(&groups.uncertain))
        .collect();
    ensure(h + i + u == f.items.len() && union == all, || "statuses do not partition the items".into())?;

    let stricter = partition_by_status(&records(f, (threshold + 0.15).min(0.99)), &f.items).unwrap();
    ensure(
        ids(&stricter.harmonious).is_subset(&ids(&groups.harmonious))
            && ids(&stricter.incompatible).is_subset(&ids(&groups.incompatible))
            && ids(&groups.uncertain).is_subset(&ids(&stricter.uncertain)),
        || "raising the threshold moved an item out of uncertain".into(),
    )?;

    let n = equal_size(&groups, None).map_err(|e| e.to_string())?;
    if n == 0 {
        return Ok(false);
    }
    let build = |s| build_setting_dataset(s, if s == Setting::Harmonious { &groups.harmonious } else { &groups.incompatible }, n, seed, ex);
    let har = build(Setting::Harmonious).map_err(|e| e.to_string())?;
    let inc = build(Setting::Incompatible).map_err(|e| e.to_string())?;
    let sa = build(Setting::SelfAligning).map_err(|e| e.to_string())?;
    ensure(har.len() == n && inc.len() == n && sa.len() == n, || {
        format!("sizes {} {} {} (want {n})", har.len(), inc.len(), sa.len())
    })?;
    let (bi, bs) = (by_source(&inc), by_source(&sa));
    ensure(bi.keys().eq(bs.keys()), || "self-aligning and incompatible queries differ".into())?;
    for (id, e) in &bi {
        let s = bs[id];
        ensure(e.instruction == s.instruction, || format!("{id}: instructions differ"))?;
        ensure(e.answer_letter != s.answer_letter, || format!("{id}: answers coincide"))?;
    }
    let pure = |rho| mix_ratio(&inc, &sa, &MixSpec::new(rho, seed)).map_err(|e| e.to_string());
    ensure(pure(0.0)? == inc, || "ratio 0 is not the incompatible set".into())?;
    ensure(pure(1.0)? == sa, || "ratio 1 is not the self-aligning set".into())?;
    Ok(true)
}

fn paired(n: usize) -> (Vec<IftExample>, Vec<IftExample>) {
    let make = |i: usize, setting, letter| IftExample {
        instruction: format!("query {i}"),
        response: format!("{letter}"),
        setting,
        source_item_id: Some(format!("q{i:03}")),
        answer_letter: Letter::from_char(letter),
        explanation_origin: ExplanationOrigin::None,
        flagged: false,
    };
    (
        (0..n).map(|i| make(i, Setting::Incompatible, 'A')).collect(),
        (0..n).map(|i| make(i, Setting::SelfAligning, 'B')).collect(),
    )
}

fn construction_invariants() -> Check {
    let base = mock_client("base", MockGeneration::Digest);
    let ext = mock_client("ext", MockGeneration::Canned);
    let cfg = GenerationConfig::default();
    let ex = Explainer { base: &base, external: &ext, config: &cfg };
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut built = 0;
    for k in 0..500 {
        let f = probe_fixture(&mut rng, k);
        let threshold = rng.random_range(0.2..0.8);
        built += usize::from(one_fixture(&f, threshold, k as u64, &ex).map_err(|e| format!("fixture {k}: {e}"))?);
    }
    ensure(built >= 250, || format!("only {built} of 500 fixtures had both groups"))?;
    let (inc, sa) = paired(100);
    let mix = mix_ratio(&inc, &sa, &MixSpec::new(0.4, 3)).map_err(|e| e.to_string())?;
    let n_self = mix.iter().filter(|e| e.setting == Setting::SelfAligning).count();
    let n_inc = mix.iter().filter(|e| e.setting == Setting::Incompatible).count();
    ensure(n_self == 40 && n_inc == 60, || format!("ratio 0.4 of 100 gave {n_self}/{n_inc}"))
}

// Synthetic study.

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn synthetic_study() -> Check {
    let start = Instant::now();
    let grid = vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
    let frozen = run_synthetic_study(&StudyConfig::new(200, grid.clone(), 0.0, 7)).map_err(|e| e.to_string())?;
    let ratios: BTreeSet<&str> = frozen.reports.iter().filter_map(|r| r.labels.get("ratio").map(String::as_str)).collect();
    ensure(ratios.len() == grid.len(), || format!("ratios covered: {ratios:?}"))?;
    for r in &frozen.reports {
        ensure(r.mean_rank_corr == Some(1.0) && r.mean_kl == 0.0, || {
            format!("alpha 0 gave corr {:?}, kl {} for {:?}", r.mean_rank_corr, r.mean_kl, r.labels)
        })?;
    }

    let study = StudyConfig::new(200, grid, 0.5, 7);
    let out = run_synthetic_study(&study).map_err(|e| e.to_string())?;
    let alphas: BTreeSet<u64> = out.kl_ordering.iter().map(|c| (c.alpha * 10.0).round() as u64).collect();
    ensure(alphas == (1..=10).collect(), || format!("alpha grid covered: {alphas:?}"))?;
    if let Some(bad) = out.kl_ordering.iter().find(|c| c.self_aligning > c.incompatible) {
        return Err(format!(
            "{} at alpha {}: self-aligning KL {} > incompatible KL {}",
            bad.item_id, bad.alpha, bad.self_aligning, bad.incompatible
        ));
    }

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline::cmd_simulate(&study, &a).map_err(|e| e.to_string())?;
    pipeline::cmd_simulate(&study, &b).map_err(|e| e.to_string())?;
    ensure(tree(&a) == tree(&b), || "simulation outputs differ between runs".into())?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))
}

// Determinism and cache on the mock backend.

const LETTERS: [&str; 4] = ["A", "B", "C", "D"];

const RUN_CONFIG: &str = r#"
seed = 3
ratio_grid = [0.0, 0.5, 1.0]

[[domains]]
name = "history"
corpus = "history.jsonl"
dev_n = 5
test_n = 20
train_n = 60

[[models]]
kind = "mock"
model_name = "base"
mock = { scoring = "hashed", generation = "digest" }

[[tuned]]
base_model = "base"
domain = "history"
setting = "incompatible"
backend = { kind = "mock", model_name = "tuned-inc", mock = { scoring = "hashed", salt = 1 } }

[[tuned]]
base_model = "base"
domain = "history"
setting = "self_aligning"
backend = { kind = "mock", model_name = "tuned-self", mock = { scoring = "hashed", salt = 2 } }
"#;

fn write_corpus(dir: &Path) {
    let mut lines = String::new();
    for i in 0..85 {
        let choices: BTreeMap<&str, String> =
            LETTERS.iter().enumerate().map(|(j, l)| (*l, format!("Option text {i}-{j}"))).collect();
        let line = serde_json::json!({
            "id": format!("h{i:03}"),
            "domain": "history",
            "question": format!("Which record matches entry {i}?"),
            "choices": choices,
            "answer": LETTERS[i % 4],
            "explanation": format!("Entry {i} is documented."),
        });
        lines.push_str(&format!("{line}\n"));
    }
    fs::write(dir.join("history.jsonl"), lines).unwrap();
}

fn run_all(cfg: &RunConfig) -> Result<u64, String> {
    let mut calls = 0;
    for step in [pipeline::cmd_probe, pipeline::cmd_build, pipeline::cmd_eval, pipeline::cmd_analyze] {
        let o = step(cfg).map_err(|e| e.to_string())?;
        ensure(o.is_complete(), || format!("{} reported failures", o.command))?;
        calls += o.network_calls;
    }
    Ok(calls)
}

fn determinism_and_cache() -> Check {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let config = |out: &str, cache: &str| {
        let mut c = RunConfig::from_toml_str(RUN_CONFIG, dir.path()).unwrap();
        c.output_dir = out.into();
        c.cache_dir = Some(cache.into());
        c
    };
    let (a, b) = (config("out-a", "cache-a"), config("out-b", "cache-b"));
    let cold = run_all(&a)?;
    ensure(cold > 0, || "cold run made no backend calls".into())?;
    run_all(&b)?;
    let first = tree(&a.output_root());
    ensure(first == tree(&b.output_root()), || "artifact trees differ between runs".into())?;
    ensure(first.keys().any(|k| k.starts_with("analysis")), || "analysis outputs missing".into())?;
    let warm = run_all(&a)?;
    ensure(warm == 0, || format!("warm rerun made {warm} network calls"))?;
    ensure(tree(&a.output_root()) == first, || "warm rerun changed the artifacts".into())
}

fn non_reproducibility_statement() -> Check {
    let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = fs::read_to_string(&readme).map_err(|e| format!("{}: {e}", readme.display()))?;
    ensure(text.contains("not reproducible at desk scale"), || "README lacks the statement".into())?;
    common::check_table_schema()
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("metric oracle equivalence", metric_oracles),
        ("closed-form spot checks", spot_checks),
        ("prompt bit-exactness", prompt_goldens),
        ("partition and construction invariants", construction_invariants),
        ("synthetic end-to-end study", synthetic_study),
        ("determinism and cache", determinism_and_cache),
        ("non-reproducibility statement and table schema", non_reproducibility_statement),
    ];
    let total = criteria.len();
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed.push(name);
            }
        }
    }
    println!("acceptance: {} passed, {} failed", total - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

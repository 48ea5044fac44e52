use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{IftExample, InterventionError, Setting};
use crate::util::{derive_seed, permutation, sample_positions};

const SNAP: f64 = 1e-9;

fn default_blend() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// Fraction of queries that take their self-aligning variant.
    pub consistency_ratio: f64,
    /// Size of the mix; defaults to every paired query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_n: Option<usize>,
    #[serde(default = "default_blend")]
    pub general_blend: f64,
    pub seed: u64,
}

impl MixSpec {
    pub fn new(consistency_ratio: f64, seed: u64) -> Self {
        MixSpec {
            consistency_ratio,
            total_n: None,
            general_blend: default_blend(),
            seed,
        }
    }
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP {
        return r;
    }
    let h = x.floor() + 0.5;
    if (x - h).abs() < SNAP {
        h
    } else {
        x
    }
}

/// Largest-remainder split of `n` into `(ratio·n, (1−ratio)·n)`. A tied
/// remainder goes to the second part.
pub fn mix_counts(ratio: f64, n: usize) -> (usize, usize) {
    let a = snap(ratio * n as f64);
    let fa = a.floor();
    let frac = a - fa;
    let mut first = fa as usize;
    let fb = (n as f64 - a).floor() as usize;
    if first + fb < n && frac > 0.5 {
        first += 1;
    }
    (first, n - first)
}

fn all_setting(ds: &[IftExample], setting: Setting) -> bool {
    !ds.is_empty() && ds.iter().all(|e| e.setting == setting)
}

fn index_by_source(ds: &[IftExample], which: &str) -> Result<HashMap<String, usize>, InterventionError> {
    let mut map = HashMap::with_capacity(ds.len());
    for (i, e) in ds.iter().enumerate() {
        let id = e.source_item_id.clone().ok_or_else(|| {
            InterventionError::Unpairable(format!("{which} dataset has an example without a source item"))
        })?;
        if map.insert(id.clone(), i).is_some() {
            return Err(InterventionError::Unpairable(format!(
                "{which} dataset repeats source item {id}"
            )));
        }
    }
    Ok(map)
}

/// Mixes two variants of the same queries: `round(ρ·N)` queries take their
/// `self_aligning_ds` variant, the rest their `incompatible_ds` variant.
///
/// Passing the datasets swapped with `1 − ρ` yields the same mix.
pub fn mix_ratio(
    incompatible_ds: &[IftExample],
    self_aligning_ds: &[IftExample],
    spec: &MixSpec,
) -> Result<Vec<IftExample>, InterventionError> {
    let rho = spec.consistency_ratio;
    if !(0.0..=1.0).contains(&rho) {
        return Err(InterventionError::Mix(format!("consistency ratio {rho} outside [0, 1]")));
    }
    let swapped = all_setting(incompatible_ds, Setting::SelfAligning)
        && all_setting(self_aligning_ds, Setting::Incompatible);
    let (inc, sa, rho) = if swapped {
        (self_aligning_ds, incompatible_ds, 1.0 - rho)
    } else {
        (incompatible_ds, self_aligning_ds, rho)
    };

    let inc_idx = index_by_source(inc, "incompatible")?;
    let sa_idx = index_by_source(sa, "self-aligning")?;
    let a: BTreeSet<&String> = inc_idx.keys().collect();
    let b: BTreeSet<&String> = sa_idx.keys().collect();
    if a != b {
        let diff: Vec<_> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(InterventionError::Unpairable(format!(
            "unmatched source items: {}",
            diff.join(", ")
        )));
    }

    let n = spec.total_n.unwrap_or(inc.len());
    if n > inc.len() {
        return Err(InterventionError::Mix(format!(
            "total_n {n} exceeds the {} paired queries",
            inc.len()
        )));
    }
    let (n_self, _) = mix_counts(rho, n);

    let sorted: Vec<&String> = a.into_iter().collect();
    let perm = permutation(sorted.len(), derive_seed(spec.seed, "mix"));
    let mut choice: BTreeMap<&str, bool> = BTreeMap::new();
    for (rank, &p) in perm.iter().take(n).enumerate() {
        choice.insert(sorted[p].as_str(), rank < n_self);
    }

    Ok(inc
        .iter()
        .filter_map(|e| {
            let id = e.source_item_id.as_deref().expect("indexed above");
            choice.get(id).map(|&use_self| {
                if use_self {
                    sa[sa_idx[id]].clone()
                } else {
                    e.clone()
                }
            })
        })
        .collect())
}

/// General examples needed so they make up `blend` of the blended set.
pub fn general_count(domain_n: usize, blend: f64) -> usize {
    if blend <= 0.0 {
        return 0;
    }
    snap(blend * domain_n as f64 / (1.0 - blend)).round() as usize
}

/// Adds a seeded general-data sample to a domain dataset and shuffles the
/// result. The sample depends only on the seed and its size, so datasets of
/// equal size receive the same general examples.
pub fn blend_general(
    domain_ds: &[IftExample],
    general_ds: &[IftExample],
    blend: f64,
    seed: u64,
) -> Result<Vec<IftExample>, InterventionError> {
    if !(0.0..1.0).contains(&blend) {
        return Err(InterventionError::Mix(format!("general blend {blend} outside [0, 1)")));
    }
    let g = general_count(domain_ds.len(), blend);
    if g == 0 {
        return Ok(domain_ds.to_vec());
    }
    if g > general_ds.len() {
        return Err(InterventionError::InsufficientGeneral {
            needed: g,
            available: general_ds.len(),
        });
    }
    let mut combined = domain_ds.to_vec();
    combined.extend(
        sample_positions(general_ds.len(), g, derive_seed(seed, "general"))
            .into_iter()
            .map(|i| general_ds[i].clone()),
    );
    let order = permutation(combined.len(), derive_seed(seed, "blend"));
    Ok(order.into_iter().map(|i| combined[i].clone()).collect())
}

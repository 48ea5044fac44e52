use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{average_ranks, pearson, AnalysisError, ConsistencyReport};

pub const MIN_GROUP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrelation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided p-value of a partial correlation with one control variable.
pub fn partial_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 3) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Spearman partial correlation of `x` and `y` controlling for `z`, with a
/// t-test on `n − 3` degrees of freedom.
///
/// A constant `z` carries no information and leaves the plain Spearman
/// correlation of `x` and `y`.
pub fn spearman_partial(x: &[f64], y: &[f64], z: &[f64]) -> Result<PartialCorrelation, AnalysisError> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(AnalysisError::Partial(format!(
            "lengths differ: {}, {}, {}",
            n,
            y.len(),
            z.len()
        )));
    }
    if n < MIN_GROUP {
        return Err(AnalysisError::Partial(format!("needs at least {MIN_GROUP} points, got {n}")));
    }
    let (rx, ry, rz) = (average_ranks(x), average_ranks(y), average_ranks(z));
    let rxy = pearson(&rx, &ry)
        .ok_or_else(|| AnalysisError::Partial("x or y is constant after ranking".into()))?;
    let rxz = pearson(&rx, &rz).unwrap_or(0.0);
    let ryz = pearson(&ry, &rz).unwrap_or(0.0);
    if rxz.abs() >= 1.0 || ryz.abs() >= 1.0 {
        return Err(AnalysisError::Partial(
            "control variable is perfectly rank-correlated with x or y".into(),
        ));
    }
    let r = ((rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt()).clamp(-1.0, 1.0);
    Ok(PartialCorrelation {
        r,
        p_value: partial_p_value(r, n),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`; `None` when `x` is constant.
pub fn ols(x: &[f64], y: &[f64]) -> Option<Regression> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let r_squared = pearson(x, y).map_or(0.0, |r| r * r);
    Some(Regression {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub labels: BTreeMap<String, String>,
}

/// Consistency-versus-accuracy analysis over one group of tuned models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetAnalysis {
    pub group: BTreeMap<String, String>,
    pub points: Vec<FleetPoint>,
    pub partial_r: f64,
    pub p_value: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<Regression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub group: BTreeMap<String, String>,
    pub n: usize,
    pub reason: String,
}

/// Grouping value of a report. `model`/`base_model`, `tuned_model` and
/// `suite` are built in; other keys read the report's labels.
pub fn group_value(report: &ConsistencyReport, key: &str) -> String {
    match key {
        "model" | "base_model" => report.base_model.clone(),
        "tuned_model" => report.tuned_model.clone(),
        "suite" => report.suite_kind.key().to_string(),
        other => report.labels.get(other).cloned().unwrap_or_default(),
    }
}

fn point_labels(r: &ConsistencyReport) -> BTreeMap<String, String> {
    let mut labels = r.labels.clone();
    labels.insert("base_model".into(), r.base_model.clone());
    labels.insert("tuned_model".into(), r.tuned_model.clone());
    labels.insert("suite".into(), r.suite_kind.key().to_string());
    labels
}

/// Partial correlation of consistency (x) with tuned accuracy (y) given
/// base accuracy (z), per group. Groups that are too small or degenerate
/// are returned as skipped.
pub fn fleet_analysis(
    reports: &[ConsistencyReport],
    group_by: &[&str],
) -> (Vec<FleetAnalysis>, Vec<SkippedGroup>) {
    let mut groups: BTreeMap<Vec<String>, Vec<&ConsistencyReport>> = BTreeMap::new();
    for r in reports {
        let key = group_by.iter().map(|k| group_value(r, k)).collect();
        groups.entry(key).or_default().push(r);
    }
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for (key, members) in groups {
        let group: BTreeMap<String, String> = group_by
            .iter()
            .map(|k| k.to_string())
            .zip(key)
            .collect();
        let points: Vec<FleetPoint> = members
            .iter()
            .filter_map(|r| {
                r.mean_rank_corr.map(|x| FleetPoint {
                    x,
                    y: r.tuned_accuracy,
                    z: r.base_accuracy,
                    labels: point_labels(r),
                })
            })
            .collect();
        let n = points.len();
        let skip = |reason: String| {
            tracing::warn!(?group, n, %reason, "fleet group skipped");
            SkippedGroup {
                group: group.clone(),
                n,
                reason,
            }
        };
        if n < MIN_GROUP {
            skipped.push(skip(format!("{n} usable reports, at least {MIN_GROUP} needed")));
            continue;
        }
        let x: Vec<f64> = points.iter().map(|p| p.x).collect();
        let y: Vec<f64> = points.iter().map(|p| p.y).collect();
        let z: Vec<f64> = points.iter().map(|p| p.z).collect();
        match spearman_partial(&x, &y, &z) {
            Ok(pc) => done.push(FleetAnalysis {
                regression: ols(&x, &y),
                group: group.clone(),
                points,
                partial_r: pc.r,
                p_value: pc.p_value,
                n,
            }),
            Err(e) => skipped.push(skip(e.to_string())),
        }
    }
    (done, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SuiteKind;

    fn report(base: &str, tuned: &str, suite: SuiteKind, x: f64, y: f64, z: f64) -> ConsistencyReport {
        ConsistencyReport {
            base_model: base.into(),
            tuned_model: tuned.into(),
            suite_kind: suite,
            mean_rank_corr: Some(x),
            mean_kl: 0.0,
            tuned_accuracy: y,
            base_accuracy: z,
            n_items: 10,
            n_excluded: 0,
            labels: BTreeMap::new(),
        }
    }

    #[test]
    fn identical_x_and_y_give_unit_partial_and_slope() {
        let x = [0.1, 0.5, 0.3, 0.9, 0.7];
        let z = [0.2, 0.1, 0.4, 0.3, 0.5];
        let pc = spearman_partial(&x, &x, &z).unwrap();
        assert!((pc.r - 1.0).abs() < 1e-12);
        assert_eq!(pc.p_value, 0.0);
        let reg = ols(&x, &x).unwrap();
        assert!((reg.slope - 1.0).abs() < 1e-12 && reg.intercept.abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(spearman_partial(&x, &x, &x).is_err());
        assert!(spearman_partial(&[1.0; 4], &x, &[4.0, 1.0, 3.0, 2.0]).is_err());
        assert!(spearman_partial(&x[..3], &x[..3], &x[..3]).is_err());
        let plain = spearman_partial(&x, &[1.0, 3.0, 2.0, 4.0], &[7.0; 4]).unwrap();
        assert!((plain.r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn p_value_matches_reference_t_distribution() {
        // t = 0.5·sqrt(7/0.75) ≈ 1.5275 on 7 df; two-sided p ≈ 0.1704.
        let p = partial_p_value(0.5, 10);
        assert!((p - 0.1704).abs() < 5e-4, "{p}");
        assert_eq!(partial_p_value(0.0, 10), 1.0);
    }

    #[test]
    fn groups_by_model_and_suite() {
        let mut reports = Vec::new();
        for m in ["m1", "m2", "m3", "m4"] {
            for s in SuiteKind::ALL {
                for k in 0..8 {
                    let x = 0.1 * k as f64 + if m == "m1" { 0.0 } else { 0.01 };
                    reports.push(report(m, &format!("{m}-t{k}"), s, x, x * 0.5, (k % 3) as f64));
                }
            }
        }
        assert_eq!(reports.len(), 96);
        let (done, skipped) = fleet_analysis(&reports, &["model", "suite"]);
        assert_eq!(done.len(), 12);
        assert!(skipped.is_empty());
        assert!(done.iter().all(|f| (f.partial_r - 1.0).abs() < 1e-12 && f.n == 8));
    }

    #[test]
    fn small_groups_are_skipped() {
        let reports: Vec<_> = (0..3)
            .map(|k| report("m", "t", SuiteKind::Homo, k as f64, k as f64, 0.0))
            .collect();
        let (done, skipped) = fleet_analysis(&reports, &["model"]);
        assert!(done.is_empty());
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].n, 3);
    }
}

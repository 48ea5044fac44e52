use super::AnalysisError;
use crate::choice::ChoiceDistribution;

pub const DEFAULT_KL_EPSILON: f64 = 1e-10;

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson needs equal lengths");
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation as the Pearson coefficient of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

fn same_letters(p: &ChoiceDistribution, q: &ChoiceDistribution) -> Result<(), AnalysisError> {
    if p.len() != q.len() {
        return Err(AnalysisError::LetterMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// Rank correlation of two choice distributions over the same letters.
/// `None` marks an undefined coefficient (a constant ranking).
pub fn rank_correlation(p: &ChoiceDistribution, q: &ChoiceDistribution) -> Result<Option<f64>, AnalysisError> {
    same_letters(p, q)?;
    if p.len() < 2 {
        return Err(AnalysisError::TooFewChoices(p.len()));
    }
    Ok(spearman(p.probs(), q.probs()))
}

fn smooth(p: &[f64], eps: f64) -> Vec<f64> {
    let z = 1.0 + p.len() as f64 * eps;
    p.iter().map(|v| (v + eps) / z).collect()
}

/// KL(p_tuned ‖ q_base) in nats after additive `epsilon` smoothing of both
/// distributions. With `epsilon = 0` a zero in `q` under mass in `p` gives
/// positive infinity.
pub fn kl_divergence(
    p_tuned: &ChoiceDistribution,
    q_base: &ChoiceDistribution,
    epsilon: f64,
) -> Result<f64, AnalysisError> {
    same_letters(p_tuned, q_base)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(AnalysisError::Epsilon(epsilon));
    }
    let p = smooth(p_tuned.probs(), epsilon);
    let q = smooth(q_base.probs(), epsilon);
    let mut kl = 0.0;
    for (a, b) in p.iter().zip(&q) {
        if *a == 0.0 {
            continue;
        }
        if *b == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += a * (a / b).ln();
    }
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn d(p: &[f64]) -> ChoiceDistribution {
        ChoiceDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[0.1, 0.4, 0.4, 0.1, 0.0]), vec![2.5, 4.5, 4.5, 2.5, 1.0]);
    }

    #[test]
    fn rank_correlation_examples() {
        let p = d(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(rank_correlation(&p, &p).unwrap(), Some(1.0));
        assert_eq!(rank_correlation(&p, &d(&[0.4, 0.3, 0.2, 0.1])).unwrap(), Some(-1.0));
        let r = rank_correlation(&p, &d(&[0.2, 0.1, 0.3, 0.4])).unwrap().unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(rank_correlation(&p, &ChoiceDistribution::uniform(4).unwrap()).unwrap(), None);
        assert!(rank_correlation(&p, &d(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn kl_examples() {
        let half = d(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&half, &half, 0.0).unwrap(), 0.0);
        let k = kl_divergence(&half, &d(&[0.25, 0.75]), 0.0).unwrap();
        let by_hand = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((k - by_hand).abs() < 1e-15);
        assert!((k - 0.1438).abs() < 5e-5);
        let zero = d(&[1.0, 0.0]);
        assert_eq!(kl_divergence(&half, &zero, 0.0).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&half, &zero, DEFAULT_KL_EPSILON).unwrap().is_finite());
        assert!(kl_divergence(&half, &zero, -1.0).is_err());
    }

    fn dist_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..=5).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.0f64..1.0, n),
            )
        })
    }

    fn norm(w: &[f64]) -> Option<ChoiceDistribution> {
        ChoiceDistribution::from_weights(w.to_vec()).ok()
    }

    proptest! {
        #[test]
        fn rank_correlation_symmetric_and_monotone_invariant((a, b) in dist_strategy()) {
            let (Some(p), Some(q)) = (norm(&a), norm(&b)) else { return Ok(()); };
            let pq = rank_correlation(&p, &q).unwrap();
            prop_assert_eq!(pq, rank_correlation(&q, &p).unwrap());
            let cubed = norm(&p.probs().iter().map(|v| v.powi(3) + 0.01).collect::<Vec<_>>()).unwrap();
            let t = rank_correlation(&cubed, &q).unwrap();
            match (pq, t) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }

        #[test]
        fn kl_nonnegative_zero_iff_equal((a, b) in dist_strategy(), eps in 0.0f64..1e-3) {
            let (Some(p), Some(q)) = (norm(&a), norm(&b)) else { return Ok(()); };
            let k = kl_divergence(&p, &q, eps).unwrap();
            prop_assert!(k >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p, eps).unwrap(), 0.0);
            if smooth(p.probs(), eps) != smooth(q.probs(), eps) && k.is_finite() {
                prop_assert!(k > 0.0 || smooth(p.probs(), eps).iter().zip(smooth(q.probs(), eps)).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
    }
}

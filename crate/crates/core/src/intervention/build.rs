use super::explain::generate_until;
use super::{
    attach_explanation, Explainer, ExplanationOrigin, Groups, IftExample, InterventionError, Probed,
    Setting,
};
use crate::backend::BackendError;
use crate::choice::Letter;
use crate::corpus::McqItem;
use crate::probing::ProbeStatus;
use crate::prompts::{banned_word, contextualized_instruction, evidence_prompt, vanilla_instruction, vanilla_output};
use crate::util::{derive_seed, parallel_map, sample_positions};

/// Instruction text of every item-derived, non-contextualized example.
pub fn example_instruction(item: &McqItem) -> String {
    vanilla_instruction(item)
}

/// Common size of the harmonious, incompatible and self-aligning datasets:
/// `requested` when given and feasible, else the smaller of the two groups.
pub fn equal_size(groups: &Groups, requested: Option<usize>) -> Result<usize, InterventionError> {
    let (h, i, _) = groups.sizes();
    let feasible = h.min(i);
    match requested {
        None => Ok(feasible),
        Some(n) if n <= feasible => Ok(n),
        Some(n) => {
            let (setting, available) = if h < i {
                (Setting::Harmonious, h)
            } else {
                (Setting::Incompatible, i)
            };
            Err(InterventionError::InsufficientGroup {
                setting,
                requested: n,
                available,
                feasible,
            })
        }
    }
}

fn group_tag(setting: Setting) -> &'static str {
    match setting {
        Setting::Harmonious => "harmonious",
        _ => "incompatible",
    }
}

/// Seeded subsample of `n` members, in group order. Settings derived from
/// the incompatible group share one subsample, so their queries coincide.
pub fn subsample(
    setting: Setting,
    group: &[Probed],
    n: usize,
    seed: u64,
) -> Result<Vec<Probed>, InterventionError> {
    if n > group.len() {
        return Err(InterventionError::InsufficientGroup {
            setting,
            requested: n,
            available: group.len(),
            feasible: group.len(),
        });
    }
    let picked = sample_positions(group.len(), n, derive_seed(seed, group_tag(setting)));
    Ok(picked.into_iter().map(|i| group[i].clone()).collect())
}

fn expect_status(p: &Probed, status: ProbeStatus) -> Result<(), InterventionError> {
    if p.record.item_id != p.item.id {
        return Err(InterventionError::Precondition {
            id: p.item.id.clone(),
            reason: format!("paired with the probe of {}", p.record.item_id),
        });
    }
    let consistent = match status {
        ProbeStatus::Harmonious => p.record.prediction == p.item.gold,
        ProbeStatus::Incompatible => p.record.prediction != p.item.gold,
        ProbeStatus::Uncertain => true,
    };
    if p.record.status != status || !consistent {
        return Err(InterventionError::Precondition {
            id: p.item.id.clone(),
            reason: format!(
                "expected a {status} probe, got {} with prediction {} and gold {}",
                p.record.status, p.record.prediction, p.item.gold
            ),
        });
    }
    Ok(())
}

/// Explanation plus its origin and flag. A content-filter refusal yields no
/// explanation and a flagged example instead of an error.
fn explained(
    item: &McqItem,
    answer: Letter,
    origin: ExplanationOrigin,
    explainer: &Explainer<'_>,
) -> Result<(String, ExplanationOrigin, bool), InterventionError> {
    match attach_explanation(item, answer, origin, explainer) {
        Ok(e) => Ok((e, origin, false)),
        Err(InterventionError::Backend {
            source: BackendError::ContentFiltered(msg),
            ..
        }) => {
            tracing::warn!(item = %item.id, %msg, "explanation refused; example flagged");
            Ok((String::new(), ExplanationOrigin::None, true))
        }
        Err(e) => Err(e),
    }
}

fn vanilla_example(
    item: &McqItem,
    setting: Setting,
    answer: Letter,
    (explanation, origin, flagged): (String, ExplanationOrigin, bool),
) -> IftExample {
    let response = match origin {
        ExplanationOrigin::None => answer.to_string(),
        _ => vanilla_output(answer, &explanation),
    };
    IftExample {
        instruction: example_instruction(item),
        response,
        setting,
        source_item_id: Some(item.id.clone()),
        answer_letter: Some(answer),
        explanation_origin: origin,
        flagged,
    }
}

fn gold_origin(item: &McqItem) -> ExplanationOrigin {
    if item.has_explanation() {
        ExplanationOrigin::Corpus
    } else {
        ExplanationOrigin::ExternalModel
    }
}

fn build_gold(
    group: &[Probed],
    status: ProbeStatus,
    setting: Setting,
    explainer: &Explainer<'_>,
) -> Result<Vec<IftExample>, InterventionError> {
    for p in group {
        expect_status(p, status)?;
    }
    parallel_map(group, explainer.external.max_in_flight(), |_, p| {
        let e = explained(&p.item, p.item.gold, gold_origin(&p.item), explainer)?;
        Ok(vanilla_example(&p.item, setting, p.item.gold, e))
    })
    .into_iter()
    .collect()
}

/// Gold answers on items the base model already answers correctly.
/// Explanations come from the corpus when present, otherwise from the
/// external model.
pub fn build_harmonious(group: &[Probed], explainer: &Explainer<'_>) -> Result<Vec<IftExample>, InterventionError> {
    build_gold(group, ProbeStatus::Harmonious, Setting::Harmonious, explainer)
}

/// Gold answers on items the base model confidently gets wrong.
pub fn build_incompatible(group: &[Probed], explainer: &Explainer<'_>) -> Result<Vec<IftExample>, InterventionError> {
    build_gold(group, ProbeStatus::Incompatible, Setting::Incompatible, explainer)
}

/// The incompatible queries answered with the base model's own prediction,
/// explained by the base model.
pub fn build_self_aligning(group: &[Probed], explainer: &Explainer<'_>) -> Result<Vec<IftExample>, InterventionError> {
    for p in group {
        expect_status(p, ProbeStatus::Incompatible)?;
    }
    parallel_map(group, explainer.base.max_in_flight(), |_, p| {
        let answer = p.record.prediction;
        let e = explained(&p.item, answer, ExplanationOrigin::BaseModel, explainer)?;
        Ok(vanilla_example(&p.item, Setting::SelfAligning, answer, e))
    })
    .into_iter()
    .collect()
}

/// Incompatible items with generated supporting evidence placed in the
/// instruction. The response is the gold letter alone.
pub fn build_contextualized(group: &[Probed], explainer: &Explainer<'_>) -> Result<Vec<IftExample>, InterventionError> {
    for p in group {
        expect_status(p, ProbeStatus::Incompatible)?;
    }
    parallel_map(group, explainer.external.max_in_flight(), |_, p| {
        let item = &p.item;
        let generated = generate_until(
            explainer.external,
            &evidence_prompt(item, item.gold),
            explainer.config,
            &[],
            |t| t.trim().to_string(),
            |t| !t.is_empty() && banned_word(t).is_none(),
        );
        let (evidence, flagged) = match generated {
            Ok((text, ok)) => {
                if !ok {
                    tracing::warn!(item = %item.id, "evidence still violates constraints; example flagged");
                }
                (text, !ok)
            }
            Err(BackendError::ContentFiltered(msg)) => {
                tracing::warn!(item = %item.id, %msg, "evidence refused; example flagged");
                (String::new(), true)
            }
            Err(source) => {
                return Err(InterventionError::Backend {
                    id: item.id.clone(),
                    source,
                })
            }
        };
        Ok(IftExample {
            instruction: contextualized_instruction(item, &evidence),
            response: item.gold.to_string(),
            setting: Setting::Contextualized,
            source_item_id: Some(item.id.clone()),
            answer_letter: Some(item.gold),
            explanation_origin: ExplanationOrigin::None,
            flagged,
        })
    })
    .into_iter()
    .collect()
}

/// Seeded subsample of `n` group members rendered under `setting`.
pub fn build_setting_dataset(
    setting: Setting,
    group: &[Probed],
    n: usize,
    seed: u64,
    explainer: &Explainer<'_>,
) -> Result<Vec<IftExample>, InterventionError> {
    let chosen = subsample(setting, group, n, seed)?;
    match setting {
        Setting::Harmonious => build_harmonious(&chosen, explainer),
        Setting::Incompatible => build_incompatible(&chosen, explainer),
        Setting::SelfAligning => build_self_aligning(&chosen, explainer),
        Setting::Contextualized => build_contextualized(&chosen, explainer),
        Setting::General => Err(InterventionError::Precondition {
            id: String::new(),
            reason: "general examples are not built from probed items".into(),
        }),
    }
}

use serde::{Deserialize, Serialize};

use super::{ExplanationOrigin, InterventionError};
use crate::backend::{BackendError, Client, GenerateParams};
use crate::choice::Letter;
use crate::corpus::McqItem;
use crate::prompts::{base_explanation_prompt, external_explanation_prompt, BASE_EXPLANATION_STOPS};

fn default_max_tokens() -> u32 {
    512
}
fn default_retry_limit() -> u32 {
    3
}
fn default_retry_temperature() -> f64 {
    0.7
}

/// Sampling settings for explanation and evidence generation. The first
/// attempt is greedy; retries sample at `retry_temperature` with the attempt
/// number as seed, so every attempt stays cacheable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_retry_temperature")]
    pub retry_temperature: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            max_tokens: default_max_tokens(),
            retry_limit: default_retry_limit(),
            retry_temperature: default_retry_temperature(),
        }
    }
}

impl GenerationConfig {
    pub(crate) fn params(&self, attempt: u32, stop: &[&str]) -> GenerateParams {
        let base = GenerateParams::greedy(self.max_tokens).with_stop(stop.iter().copied());
        if attempt == 0 {
            base
        } else {
            GenerateParams {
                temperature: self.retry_temperature,
                seed: Some(u64::from(attempt)),
                ..base
            }
        }
    }
}

/// Endpoints used to write explanations: the probed base model for its own
/// (wrong) answers, an external model for gold answers.
#[derive(Clone, Copy)]
pub struct Explainer<'a> {
    pub base: &'a Client,
    pub external: &'a Client,
    pub config: &'a GenerationConfig,
}

/// Generates until `accept` holds or the retry budget runs out. Returns the
/// last text and whether it was accepted.
pub(crate) fn generate_until(
    client: &Client,
    prompt: &str,
    config: &GenerationConfig,
    stop: &[&str],
    clean: impl Fn(&str) -> String,
    accept: impl Fn(&str) -> bool,
) -> Result<(String, bool), BackendError> {
    let mut last = String::new();
    for attempt in 0..=config.retry_limit {
        let text = clean(&client.generate(prompt, &config.params(attempt, stop))?);
        if accept(&text) {
            return Ok((text, true));
        }
        last = text;
    }
    Ok((last, false))
}

/// Strips surrounding whitespace and the code fence the chat prompt's
/// answer block opens with.
pub fn clean_explanation(text: &str) -> String {
    let mut t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        t = rest.trim_start();
    }
    if let Some(rest) = t.strip_suffix("```") {
        t = rest.trim_end();
    }
    t.to_string()
}

/// Explanation text for `answer` on `item` from the requested origin.
pub fn attach_explanation(
    item: &McqItem,
    answer: Letter,
    origin: ExplanationOrigin,
    explainer: &Explainer<'_>,
) -> Result<String, InterventionError> {
    let backend = |source| InterventionError::Backend {
        id: item.id.clone(),
        source,
    };
    let (client, prompt, stop): (&Client, String, &[&str]) = match origin {
        ExplanationOrigin::Corpus => {
            return match &item.explanation {
                Some(e) if !e.trim().is_empty() => Ok(e.clone()),
                _ => Err(InterventionError::Precondition {
                    id: item.id.clone(),
                    reason: "corpus explanation requested but the item has none".into(),
                }),
            }
        }
        ExplanationOrigin::None => return Ok(String::new()),
        ExplanationOrigin::BaseModel => (
            explainer.base,
            base_explanation_prompt(item, answer),
            &BASE_EXPLANATION_STOPS,
        ),
        ExplanationOrigin::ExternalModel => (
            explainer.external,
            external_explanation_prompt(item, answer),
            &[],
        ),
    };
    let (text, ok) = generate_until(
        client,
        &prompt,
        explainer.config,
        stop,
        clean_explanation,
        |t| !t.is_empty(),
    )
    .map_err(backend)?;
    if ok {
        Ok(text)
    } else {
        Err(InterventionError::EmptyGeneration {
            id: item.id.clone(),
            attempts: explainer.config.retry_limit + 1,
        })
    }
}

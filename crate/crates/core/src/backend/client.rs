use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    BackendError, BackendKind, BackendSpec, CacheEntry, GenerateParams, HttpTransport,
    MockTransport, RawCompletion, ResponseCache, ScoreBody, ScoringMode, Transport,
};
use crate::choice::{ChoiceDistribution, Letter};

/// Request counters. `network_calls` counts transport invocations,
/// retries included.
#[derive(Debug, Default)]
pub struct ClientStats {
    pub network_calls: AtomicU64,
    pub cache_hits: AtomicU64,
}

impl ClientStats {
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().expect("in-flight counter poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("in-flight counter poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight counter poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

/// A model endpoint with caching, retries and an in-flight bound. Safe to
/// share across threads.
pub struct Client {
    spec: BackendSpec,
    transport: Arc<dyn Transport>,
    cache: Arc<ResponseCache>,
    in_flight: InFlight,
    stats: ClientStats,
}

impl Client {
    /// Builds the transport named by `spec.kind`. Toy-simulation backends
    /// carry in-process state and must come through [`Client::with_transport`].
    pub fn from_spec(spec: BackendSpec, cache: Arc<ResponseCache>) -> Result<Self, BackendError> {
        spec.validate()?;
        let transport: Arc<dyn Transport> = match spec.kind {
            BackendKind::HttpChat | BackendKind::HttpCompletions => {
                Arc::new(HttpTransport::from_spec(&spec)?)
            }
            BackendKind::Mock => Arc::new(MockTransport::from_spec(&spec)?),
            BackendKind::ToySim => {
                return Err(BackendError::Config(
                    "toy_sim backends are constructed by the simulation module".into(),
                ))
            }
        };
        Ok(Self::assemble(spec, transport, cache))
    }

    pub fn with_transport(
        spec: BackendSpec,
        transport: Arc<dyn Transport>,
        cache: Arc<ResponseCache>,
    ) -> Result<Self, BackendError> {
        spec.validate()?;
        Ok(Self::assemble(spec, transport, cache))
    }

    fn assemble(spec: BackendSpec, transport: Arc<dyn Transport>, cache: Arc<ResponseCache>) -> Self {
        let limit = spec.max_in_flight;
        Client {
            spec,
            transport,
            cache,
            in_flight: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
            stats: ClientStats::default(),
        }
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn model_name(&self) -> &str {
        &self.spec.model_name
    }

    pub fn max_in_flight(&self) -> usize {
        self.spec.max_in_flight
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.in_flight.acquire();
                self.stats.network_calls.fetch_add(1, Ordering::Relaxed);
                call()
            };
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => {
                    if attempt >= self.spec.max_retries {
                        return Err(BackendError::RetriesExhausted {
                            attempts: attempt + 1,
                            last: Box::new(e),
                        });
                    }
                    let backoff = self.spec.retry_backoff_ms.saturating_mul(1 << attempt.min(10));
                    tracing::debug!(model = %self.spec.model_name, attempt, error = %e, "retrying");
                    std::thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn cached(&self, request: Value) -> Result<(String, Option<CacheEntry>), BackendError> {
        let key = ResponseCache::key_for(&request);
        let hit = self.cache.get(&key)?;
        if hit.is_some() {
            self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok((key, hit))
    }

    /// Distribution over `letters` for the token following `prompt`.
    pub fn score_choices(
        &self,
        prompt: &str,
        letters: &[Letter],
    ) -> Result<ChoiceDistribution, BackendError> {
        check_letters(letters)?;
        let letter_str: String = letters.iter().map(|l| l.as_char()).collect();
        let request = json!({
            "op": "score",
            "model": self.spec.model_name,
            "prompt": prompt,
            "letters": letter_str,
        });
        let (key, hit) = self.cached(request.clone())?;
        if let Some(entry) = hit {
            return serde_json::from_value(entry.value)
                .map_err(|e| BackendError::Malformed(format!("cached distribution: {e}")));
        }

        let (dist, raw) = match self.spec.scoring {
            ScoringMode::Logprob => {
                let raw = self.with_retries(|| {
                    self.transport.score(prompt, letters, self.spec.top_logprobs)
                })?;
                (distribution_from_score(&raw.body, letters)?, raw.raw)
            }
            ScoringMode::GenerateParse => {
                let params = GenerateParams::greedy(4);
                let raw = self.with_retries(|| self.transport.complete(prompt, &params))?;
                let letter = parse_letter(&raw.text, letters).ok_or_else(|| {
                    BackendError::LettersMismatch {
                        expected: letter_str.clone(),
                        got: raw.text.clone(),
                    }
                })?;
                let one_hot = ChoiceDistribution::one_hot(letters.len(), letter)?;
                (one_hot, raw.raw)
            }
        };
        self.cache.put(CacheEntry {
            key,
            request,
            raw,
            value: serde_json::to_value(&dist).expect("distribution serializes"),
        })?;
        Ok(dist)
    }

    /// Completion text, cut before the first stop sequence.
    pub fn generate(&self, prompt: &str, params: &GenerateParams) -> Result<String, BackendError> {
        if params.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        let request = json!({
            "op": "generate",
            "model": self.spec.model_name,
            "prompt": prompt,
            "params": params,
        });
        let cacheable = params.is_cacheable();
        let key = if cacheable {
            let (key, hit) = self.cached(request.clone())?;
            if let Some(entry) = hit {
                return entry
                    .value
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| BackendError::Malformed("cached completion is not text".into()));
            }
            Some(key)
        } else {
            None
        };

        let RawCompletion {
            text,
            finish_reason,
            raw,
        } = self.with_retries(|| self.transport.complete(prompt, params))?;
        if finish_reason.as_deref() == Some("content_filter") {
            return Err(BackendError::ContentFiltered(text));
        }
        let text = truncate_at_stop(&text, &params.stop).to_string();
        if let Some(key) = key {
            self.cache.put(CacheEntry {
                key,
                request,
                raw,
                value: Value::String(text.clone()),
            })?;
        }
        Ok(text)
    }
}

fn check_letters(letters: &[Letter]) -> Result<(), BackendError> {
    if letters.is_empty() {
        return Err(BackendError::InvalidRequest("no candidate letters".into()));
    }
    if let Some((i, l)) = letters.iter().enumerate().find(|(i, l)| l.index() != *i) {
        return Err(BackendError::InvalidRequest(format!(
            "candidate letters must run A, B, ... without gaps; position {i} holds {l}"
        )));
    }
    Ok(())
}

/// Renormalizes a scoring response over the candidate letters. For
/// log-probabilities each letter takes the larger of its bare and
/// space-prefixed token.
pub fn distribution_from_score(
    body: &ScoreBody,
    letters: &[Letter],
) -> Result<ChoiceDistribution, BackendError> {
    let expected: String = letters.iter().map(|l| l.as_char()).collect();
    match body {
        ScoreBody::Direct(probs) => {
            if probs.len() != letters.len() {
                return Err(BackendError::LettersMismatch {
                    expected,
                    got: format!("{} probabilities", probs.len()),
                });
            }
            Ok(ChoiceDistribution::from_weights(probs.clone())?)
        }
        ScoreBody::TopLogprobs(candidates) => {
            let mut best = vec![f64::NEG_INFINITY; letters.len()];
            for (token, lp) in candidates {
                let bare = token.strip_prefix(' ').unwrap_or(token);
                let Some(pos) = letters.iter().position(|l| {
                    let mut buf = [0u8; 4];
                    bare == l.as_char().encode_utf8(&mut buf)
                }) else {
                    continue;
                };
                if lp.is_finite() && *lp > best[pos] {
                    best[pos] = *lp;
                }
            }
            if best.iter().all(|b| b.is_infinite()) {
                let got = candidates
                    .iter()
                    .map(|(t, _)| format!("{t:?}"))
                    .collect::<Vec<_>>()
                    .join(",");
                return Err(BackendError::LettersMismatch { expected, got });
            }
            Ok(ChoiceDistribution::from_log_probs(&best)?)
        }
    }
}

fn parse_letter(text: &str, letters: &[Letter]) -> Option<Letter> {
    text.chars()
        .filter(|c| c.is_ascii_uppercase())
        .find_map(|c| Letter::from_char(c).filter(|l| letters.contains(l)))
}

pub(crate) fn truncate_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

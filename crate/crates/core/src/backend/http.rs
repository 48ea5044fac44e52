//! OpenAI-compatible `chat/completions` and `completions` wire protocol.

use serde_json::{json, Value};

use super::{
    BackendError, BackendKind, BackendSpec, GenerateParams, RawCompletion, RawScore, ScoreBody,
    Transport,
};
use crate::choice::Letter;
use crate::prompts::fill;

pub struct HttpTransport {
    agent: ureq::Agent,
    kind: BackendKind,
    base_url: String,
    model_name: String,
    api_key: Option<String>,
    prompt_template: Option<String>,
}

impl HttpTransport {
    pub fn from_spec(spec: &BackendSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        let api_key = match &spec.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(spec.request_timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpTransport {
            agent,
            kind: spec.kind,
            base_url: spec
                .base_url
                .clone()
                .unwrap_or_default()
                .trim_end_matches('/')
                .to_string(),
            model_name: spec.model_name.clone(),
            api_key,
            prompt_template: spec.prompt_template.clone(),
        })
    }

    fn endpoint(&self) -> String {
        match self.kind {
            BackendKind::HttpChat => format!("{}/chat/completions", self.base_url),
            _ => format!("{}/completions", self.base_url),
        }
    }

    fn wrap(&self, prompt: &str) -> String {
        match &self.prompt_template {
            Some(t) => fill(t, &[("prompt", prompt)]),
            None => prompt.to_string(),
        }
    }

    fn base_body(&self, prompt: &str) -> Value {
        match self.kind {
            BackendKind::HttpChat => json!({
                "model": self.model_name,
                "messages": [{"role": "user", "content": self.wrap(prompt)}],
            }),
            _ => json!({
                "model": self.model_name,
                "prompt": self.wrap(prompt),
            }),
        }
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(transport_error)?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(transport_error)?;
        if !(200..300).contains(&status) {
            if let Some(msg) = content_filter_message(&text) {
                return Err(BackendError::ContentFiltered(msg));
            }
            return Err(BackendError::Http { status, body: text });
        }
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Malformed(format!("{e}: {}", truncate(&text, 200))))
    }
}

fn transport_error(e: ureq::Error) -> BackendError {
    BackendError::Transport {
        message: e.to_string(),
        retryable: matches!(
            e,
            ureq::Error::Io(_)
                | ureq::Error::Timeout(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound
        ),
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Error payloads of the form `{"error": {"code": "content_filter", "message": ..}}`.
fn content_filter_message(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let err = v.get("error")?;
    let code = err.get("code").and_then(Value::as_str)?;
    (code == "content_filter").then(|| {
        err.get("message")
            .and_then(Value::as_str)
            .unwrap_or(body)
            .to_string()
    })
}

/// Top next-token candidates from a chat or completions response.
pub(crate) fn parse_top_logprobs(kind: BackendKind, resp: &Value) -> Result<Vec<(String, f64)>, BackendError> {
    let choice = resp
        .pointer("/choices/0")
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let logprobs = match choice.get("logprobs") {
        None | Some(Value::Null) => {
            return Err(BackendError::Unsupported(
                "endpoint returned no log-probabilities".into(),
            ))
        }
        Some(lp) => lp,
    };
    let unsupported =
        || BackendError::Unsupported("log-probability payload lacks top candidates".into());
    match kind {
        BackendKind::HttpChat => {
            let top = logprobs
                .pointer("/content/0/top_logprobs")
                .and_then(Value::as_array)
                .ok_or_else(unsupported)?;
            top.iter()
                .map(|e| {
                    let token = e.get("token").and_then(Value::as_str);
                    let lp = e.get("logprob").and_then(Value::as_f64);
                    match (token, lp) {
                        (Some(t), Some(lp)) => Ok((t.to_string(), lp)),
                        _ => Err(BackendError::Malformed(format!("bad top_logprobs entry {e}"))),
                    }
                })
                .collect()
        }
        _ => {
            let top = logprobs
                .pointer("/top_logprobs/0")
                .and_then(Value::as_object)
                .ok_or_else(unsupported)?;
            top.iter()
                .map(|(t, lp)| {
                    lp.as_f64()
                        .map(|lp| (t.clone(), lp))
                        .ok_or_else(|| BackendError::Malformed(format!("bad logprob for {t:?}")))
                })
                .collect()
        }
    }
}

pub(crate) fn parse_completion(kind: BackendKind, resp: &Value) -> Result<(String, Option<String>), BackendError> {
    let choice = resp
        .pointer("/choices/0")
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let finish = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .map(str::to_string);
    let text = match kind {
        BackendKind::HttpChat => choice.pointer("/message/content").and_then(Value::as_str),
        _ => choice.get("text").and_then(Value::as_str),
    };
    match (text, finish.as_deref()) {
        (Some(t), _) => Ok((t.to_string(), finish)),
        (None, Some("content_filter")) => Ok((String::new(), finish)),
        (None, _) => Err(BackendError::Malformed("completion has no text".into())),
    }
}

impl Transport for HttpTransport {
    fn score(&self, prompt: &str, _letters: &[Letter], top_k: u32) -> Result<RawScore, BackendError> {
        let mut body = self.base_body(prompt);
        let obj = body.as_object_mut().expect("object body");
        obj.insert("max_tokens".into(), json!(1));
        obj.insert("temperature".into(), json!(0.0));
        match self.kind {
            BackendKind::HttpChat => {
                obj.insert("logprobs".into(), json!(true));
                obj.insert("top_logprobs".into(), json!(top_k));
            }
            _ => {
                obj.insert("logprobs".into(), json!(top_k));
            }
        }
        let resp = self.post(&body)?;
        let top = parse_top_logprobs(self.kind, &resp)?;
        Ok(RawScore {
            body: ScoreBody::TopLogprobs(top),
            raw: resp,
        })
    }

    fn complete(&self, prompt: &str, params: &GenerateParams) -> Result<RawCompletion, BackendError> {
        let mut body = self.base_body(prompt);
        let obj = body.as_object_mut().expect("object body");
        obj.insert("max_tokens".into(), json!(params.max_tokens));
        obj.insert("temperature".into(), json!(params.temperature));
        if !params.stop.is_empty() {
            obj.insert("stop".into(), json!(params.stop));
        }
        if let Some(seed) = params.seed {
            obj.insert("seed".into(), json!(seed));
        }
        let resp = self.post(&body)?;
        let (text, finish_reason) = parse_completion(self.kind, &resp)?;
        Ok(RawCompletion {
            text,
            finish_reason,
            raw: resp,
        })
    }
}

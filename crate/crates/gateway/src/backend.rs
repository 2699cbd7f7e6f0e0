//! Network providers: OpenAI-compatible chat completions and embeddings.

use std::time::Duration;

use ori_core::embedding::EmbedError;
use ori_core::registry::{token_count, Completion, CompletionBackend, CompletionRequest, DispatchError};
use ori_core::{Embedder, EmbedderFingerprint, ModelCard};
use serde_json::{json, Value};

pub const HTTP_EMBED_PROVIDER: &str = "http";

/// Environment variable holding the bearer token for `model_id`:
/// `ORI_BACKEND_TOKEN_` plus the id uppercased with every non-alphanumeric
/// character replaced by `_`.
pub fn token_env_var(model_id: &str) -> String {
    let suffix: String = model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("ORI_BACKEND_TOKEN_{suffix}")
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

enum CallError {
    Timeout,
    Transport(String),
    Malformed(String),
}

fn post_json(agent: &ureq::Agent, url: &str, token: Option<&str>, body: &Value) -> Result<Value, CallError> {
    let mut request = agent.post(url).header("Content-Type", "application/json");
    if let Some(token) = token {
        request = request.header("Authorization", &format!("Bearer {token}"));
    }
    let mut response = request.send_json(body).map_err(|e| match e {
        ureq::Error::Timeout(_) => CallError::Timeout,
        other => CallError::Transport(other.to_string()),
    })?;
    let status = response.status();
    let text = response.body_mut().read_to_string().map_err(|e| match e {
        ureq::Error::Timeout(_) => CallError::Timeout,
        other => CallError::Transport(other.to_string()),
    })?;
    if !status.is_success() {
        let snippet: String = text.chars().take(200).collect();
        return Err(CallError::Transport(format!("HTTP {status}: {snippet}")));
    }
    serde_json::from_str(&text).map_err(|e| CallError::Malformed(e.to_string()))
}

/// Dispatches to `http(s)://` endpoints speaking the chat-completions API.
pub struct HttpBackend {
    agent: ureq::Agent,
    timeout: Duration,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Self {
        Self { agent: agent(timeout), timeout }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, card: &ModelCard, request: &CompletionRequest<'_>) -> Result<Completion, DispatchError> {
        let model_id = card.model_id.clone();
        if !(card.endpoint.starts_with("http://") || card.endpoint.starts_with("https://")) {
            return Err(DispatchError::UnsupportedEndpoint { model_id, endpoint: card.endpoint.clone() });
        }
        let url = format!("{}/chat/completions", card.endpoint.trim_end_matches('/'));
        let messages = match request.messages {
            Some(m) => m.clone(),
            None => json!([{"role": "user", "content": request.prompt}]),
        };
        let mut body = json!({"model": card.model_id, "messages": messages});
        if let Some(max) = request.params.max_tokens {
            body["max_tokens"] = max.into();
        }
        if let Some(t) = request.params.temperature {
            body["temperature"] = t.into();
        }
        let token = std::env::var(token_env_var(&card.model_id)).ok();
        let value = post_json(&self.agent, &url, token.as_deref(), &body).map_err(|e| match e {
            CallError::Timeout => DispatchError::Timeout { model_id: model_id.clone(), after_secs: self.timeout.as_secs_f64() },
            CallError::Transport(message) => DispatchError::Transport { model_id: model_id.clone(), message },
            CallError::Malformed(message) => DispatchError::Malformed { model_id: model_id.clone(), message },
        })?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| DispatchError::Malformed {
                model_id: model_id.clone(),
                message: "missing choices[0].message.content".into(),
            })?
            .to_string();
        let usage = |key: &str| value.pointer(&format!("/usage/{key}")).and_then(Value::as_u64);
        Ok(Completion {
            prompt_tokens: usage("prompt_tokens").unwrap_or_else(|| token_count(request.prompt)),
            completion_tokens: usage("completion_tokens").unwrap_or_else(|| token_count(&text)),
            text,
            raw: Some(value),
        })
    }
}

/// Embeddings from an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
    fingerprint: EmbedderFingerprint,
}

impl HttpEmbedder {
    pub fn new(url: &str, model: &str, dim: usize, token: Option<String>, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            url: url.to_string(),
            token,
            fingerprint: EmbedderFingerprint { provider_name: HTTP_EMBED_PROVIDER.into(), model_name: model.into(), dim },
        }
    }
}

impl Embedder for HttpEmbedder {
    fn fingerprint(&self) -> &EmbedderFingerprint {
        &self.fingerprint
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = json!({"input": texts, "model": self.fingerprint.model_name});
        let provider = |message: String| EmbedError::Provider { index: None, message };
        let value = post_json(&self.agent, &self.url, self.token.as_deref(), &body).map_err(|e| match e {
            CallError::Timeout => provider(format!("{} timed out", self.url)),
            CallError::Transport(m) | CallError::Malformed(m) => provider(m),
        })?;
        let data = value.get("data").and_then(Value::as_array).ok_or_else(|| provider("missing `data` array".into()))?;
        let mut out = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map(|i| i as usize).unwrap_or(pos);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbedError::Provider { index: Some(index), message: "missing `embedding`".into() })?
                .iter()
                .map(|v| v.as_f64().ok_or(EmbedError::NonFinite))
                .collect::<Result<Vec<f64>, _>>()?;
            let slot = out.get_mut(index).ok_or_else(|| provider(format!("index {index} out of range")))?;
            *slot = Some(values);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or(EmbedError::Provider { index: Some(i), message: "no embedding returned".into() }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_variable_names() {
        assert_eq!(token_env_var("Qwen2.5-72B"), "ORI_BACKEND_TOKEN_QWEN2_5_72B");
        assert_eq!(token_env_var("calme-2.4-78b"), "ORI_BACKEND_TOKEN_CALME_2_4_78B");
    }
}

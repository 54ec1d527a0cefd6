//! OpenAI-compatible chat-completion client.
//!
//! `temperature` and `top_p` travel as standard fields; `top_k` and
//! `repetition_penalty` are sent as extension fields. When the server rejects
//! an extension field the client drops it, resends, and reports the drop in
//! the result's warnings.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{Backend, GenerationRequest, GenerationResult};
use crate::error::{Error, Result};
use crate::space::{default_config, BackendKind, HyperparamConfig};

const EXTENSION_FIELDS: [&str; 2] = ["top_k", "repetition_penalty"];
const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

fn default_path() -> String {
    "/v1/chat/completions".into()
}

fn default_timeout() -> u64 {
    60
}

fn default_parallelism() -> usize {
    4
}

/// Endpoint description, usually read from a JSON file. The API token is
/// never stored here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_parallelism")]
    pub max_parallelism: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Backend defaults file; relative paths resolve against the spec file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defaults_file: Option<PathBuf>,
}

impl EndpointSpec {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: default_path(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_parallelism: default_parallelism(),
            retry: RetryPolicy::default(),
            defaults_file: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: EndpointSpec =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&spec.defaults_file, path.parent()) {
            if file.is_relative() {
                spec.defaults_file = Some(dir.join(file));
            }
        }
        Ok(spec)
    }

    pub fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

pub struct RemoteBackend {
    spec: EndpointSpec,
    id: String,
    default: HyperparamConfig,
    agent: ureq::Agent,
    unsupported: Mutex<BTreeSet<&'static str>>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("id", &self.id)
            .field("url", &self.spec.url())
            .finish()
    }
}

impl RemoteBackend {
    /// Builds a client; the default config comes from the spec's defaults file.
    pub fn new(spec: EndpointSpec) -> Result<Self> {
        let default = default_config(BackendKind::Remote, spec.defaults_file.as_deref())?;
        Ok(Self::with_default(spec, default))
    }

    pub fn with_default(spec: EndpointSpec, default: HyperparamConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(spec.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            id: format!("remote:{}", spec.model),
            spec,
            default,
            agent,
            unsupported: Mutex::new(BTreeSet::new()),
        }
    }

    pub fn spec(&self) -> &EndpointSpec {
        &self.spec
    }

    fn body(&self, request: &GenerationRequest, dropped: &BTreeSet<&str>) -> Value {
        let mut body = Map::new();
        body.insert("model".into(), json!(self.spec.model));
        body.insert(
            "messages".into(),
            json!([{ "role": "user", "content": request.prompt }]),
        );
        body.insert("temperature".into(), json!(request.config.temperature));
        body.insert("top_p".into(), json!(request.config.top_p));
        body.insert("max_tokens".into(), json!(request.max_new_tokens));
        body.insert("seed".into(), json!(request.seed));
        if !request.stop.is_empty() {
            body.insert("stop".into(), json!(request.stop));
        }
        if !dropped.contains("top_k") {
            body.insert("top_k".into(), json!(request.config.top_k));
        }
        if !dropped.contains("repetition_penalty") {
            body.insert("repetition_penalty".into(), json!(request.config.repetition_penalty));
        }
        Value::Object(body)
    }

    fn post(&self, body: &Value) -> std::result::Result<(u16, String), String> {
        let mut req = self.agent.post(self.spec.url());
        if let Some(var) = &self.spec.api_key_env {
            match std::env::var(var) {
                Ok(token) => req = req.header("Authorization", format!("Bearer {token}")),
                Err(_) => log::warn!("environment variable {var} is not set; sending no token"),
            }
        }
        let mut response = req.send_json(body).map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    }

    fn rejected_field(body: &str, sent: &BTreeSet<&'static str>) -> Option<&'static str> {
        let lower = body.to_lowercase();
        EXTENSION_FIELDS
            .into_iter()
            .find(|field| sent.contains(field) && lower.contains(field))
    }

    fn parse_response(
        &self,
        text: &str,
        request: &GenerationRequest,
        dropped: &BTreeSet<&str>,
    ) -> Result<GenerationResult> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Remote {
            status: 200,
            body: format!("malformed JSON: {e}"),
        })?;
        let choice = value.get("choices").and_then(|c| c.get(0));
        let content = choice
            .and_then(|c| c.pointer("/message/content").or_else(|| c.get("text")))
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Remote {
                status: 200,
                body: excerpt(text),
            })?
            .to_owned();
        let token_count = value
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .map(|n| n as usize)
            .unwrap_or_else(|| content.split_whitespace().count());
        Ok(GenerationResult {
            text: content,
            token_count,
            backend_id: self.id.clone(),
            config_echo: request.config,
            warnings: dropped.iter().map(|f| format!("{f} unsupported")).collect(),
        })
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        request.validate()?;
        let mut dropped = self.unsupported.lock().expect("field set poisoned").clone();
        let mut retries = 0;
        loop {
            let body = self.body(request, &dropped);
            let outcome = self.post(&body);
            let failure = match outcome {
                Ok((status, text)) if (200..300).contains(&status) => {
                    return self.parse_response(&text, request, &dropped);
                }
                Ok((status, text)) if status == 400 || status == 422 => {
                    let sent: BTreeSet<&'static str> =
                        EXTENSION_FIELDS.into_iter().filter(|f| !dropped.contains(f)).collect();
                    if let Some(field) = Self::rejected_field(&text, &sent) {
                        log::warn!("{} rejected `{field}`; dropping it", self.spec.url());
                        dropped.insert(field);
                        self.unsupported.lock().expect("field set poisoned").insert(field);
                        continue;
                    }
                    return Err(Error::Remote {
                        status,
                        body: excerpt(&text),
                    });
                }
                Ok((status, text)) if status == 429 || status >= 500 => {
                    format!("status {status}: {}", excerpt(&text))
                }
                Ok((status, text)) => {
                    return Err(Error::Remote {
                        status,
                        body: excerpt(&text),
                    })
                }
                Err(transport) => transport,
            };
            if retries >= self.spec.retry.max_retries {
                return Err(Error::Transport(format!(
                    "{} failed after {retries} retries: {failure}",
                    self.spec.url()
                )));
            }
            thread::sleep(self.spec.retry.backoff(retries));
            retries += 1;
        }
    }

    fn default_config(&self) -> HyperparamConfig {
        self.default
    }

    fn max_parallelism(&self) -> usize {
        self.spec.max_parallelism.max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let policy = RetryPolicy {
            max_retries: 5,
            initial_backoff_ms: 100,
            max_backoff_ms: 350,
        };
        assert_eq!(policy.backoff(0), Duration::from_millis(100));
        assert_eq!(policy.backoff(1), Duration::from_millis(200));
        assert_eq!(policy.backoff(2), Duration::from_millis(350));
        assert_eq!(policy.backoff(80), Duration::from_millis(350));
    }

    #[test]
    fn spec_defaults_and_url() {
        let spec: EndpointSpec =
            serde_json::from_str(r#"{"base_url": "http://localhost:8000/", "model": "m"}"#).unwrap();
        assert_eq!(spec.url(), "http://localhost:8000/v1/chat/completions");
        assert_eq!(spec.retry, RetryPolicy::default());
        assert_eq!(spec.max_parallelism, 4);
    }

    #[test]
    fn remote_without_defaults_is_a_config_error() {
        let spec = EndpointSpec::new("http://localhost:1", "m");
        assert!(matches!(RemoteBackend::new(spec), Err(Error::Config(_))));
    }

    #[test]
    fn wire_body_maps_fields() {
        let spec = EndpointSpec::new("http://localhost:1", "m");
        let backend = RemoteBackend::with_default(spec, crate::space::TOY_DEFAULT);
        let req = GenerationRequest::new("hi", crate::space::TOY_DEFAULT, 16, 3);
        let body = backend.body(&req, &BTreeSet::new());
        assert_eq!(body["temperature"], json!(0.6));
        assert_eq!(body["top_p"], json!(0.9));
        assert_eq!(body["top_k"], json!(50));
        assert_eq!(body["repetition_penalty"], json!(1.0));
        assert_eq!(body["max_tokens"], json!(16));
        let dropped: BTreeSet<&str> = ["top_k"].into_iter().collect();
        assert!(backend.body(&req, &dropped).get("top_k").is_none());
    }
}

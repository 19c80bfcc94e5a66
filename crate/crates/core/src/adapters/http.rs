use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AdapterError, BackendKind, CompletionBackend, CompletionRequest, Reply};

fn default_timeout_ms() -> u64 {
    20_000
}

fn default_retries() -> u32 {
    1
}

/// Chat-completion endpoint settings. The auth token itself is never stored;
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env_var: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token_env_var: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// JSON-over-HTTP chat-completion client (blocking).
pub struct HttpBackend {
    endpoint: EndpointConfig,
    client: OnceLock<Result<reqwest::blocking::Client, String>>,
    max_concurrency: usize,
}

impl HttpBackend {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            endpoint,
            client: OnceLock::new(),
            max_concurrency: 4,
        }
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    // Built lazily so that constructing the backend inside an async runtime
    // is harmless.
    fn client(&self) -> Result<&reqwest::blocking::Client, AdapterError> {
        self.client
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(self.endpoint.timeout_ms))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| AdapterError::Transport(e.clone()))
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.endpoint.model_name,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "stream": false,
        });
        if req.deterministic {
            body["temperature"] = json!(0);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<String, AdapterError> {
        let client = self.client()?;
        let mut request = client
            .post(self.endpoint.url())
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(var) = &self.endpoint.auth_token_env_var {
            match std::env::var(var) {
                Ok(token) => request = request.bearer_auth(token),
                Err(_) => log::warn!("auth token variable {var} is not set"),
            }
        }
        let response = request.send().map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(AdapterError::Status(status.as_u16()));
        }
        let text = response.text().map_err(classify)?;
        extract_content(&text)
    }

    /// Posts the request, retrying transient failures (timeouts, connection
    /// errors, 5xx and 429) up to `retries` extra times.
    pub fn http_complete(&self, req: &CompletionRequest) -> Reply {
        let started = Instant::now();
        let body = self.body(req);
        let mut result = self.attempt(&body);
        for _ in 0..self.endpoint.retries {
            match &result {
                Err(e) if is_transient(e) => result = self.attempt(&body),
                _ => break,
            }
        }
        Reply {
            result,
            latency_ms: started.elapsed().as_millis() as u64,
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Reply {
        self.http_complete(req)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}

fn classify(e: reqwest::Error) -> AdapterError {
    if e.is_timeout() {
        AdapterError::Timeout
    } else if e.is_decode() || e.is_body() {
        AdapterError::MalformedBody(e.to_string())
    } else {
        AdapterError::Transport(e.to_string())
    }
}

fn is_transient(e: &AdapterError) -> bool {
    match e {
        AdapterError::Timeout | AdapterError::Transport(_) => true,
        AdapterError::Status(code) => *code >= 500 || *code == 429,
        _ => false,
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion response.
fn extract_content(body: &str) -> Result<String, AdapterError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| AdapterError::MalformedBody(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| AdapterError::MalformedBody("missing choices[0].message.content".into()))
}

use std::fmt;
use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, GeneratorRequest, GeneratorResponse};
use crate::error::{Error, Result};
use crate::util::whitespace_tokens;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection failures, timeouts, 429 and 5xx.
    Retryable(String),
    Fatal(String),
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Retryable(m) | TransportError::Fatal(m) => f.write_str(m),
        }
    }
}

/// One JSON POST round-trip. Split out so wire payloads can be recorded.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> std::result::Result<String, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl HttpTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> std::result::Result<String, TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        match req.send(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| TransportError::Retryable(e.to_string())),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(TransportError::Retryable(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(TransportError::Fatal(format!("HTTP {code}"))),
            Err(e) => Err(TransportError::Retryable(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub retry: RetryPolicy,
}

impl fmt::Debug for LiveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key_env", &self.api_key_env)
            .field("retry", &self.retry)
            .finish()
    }
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "KGEXPLAIN_API_KEY".into(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Chat-completion-style HTTP backend.
pub struct LiveBackend {
    config: LiveConfig,
    api_key: Option<String>,
    transport: Box<dyn HttpTransport>,
}

impl fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiveBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl LiveBackend {
    /// Reads the API key from the configured environment variable, if set.
    pub fn from_env(config: LiveConfig, transport: Box<dyn HttpTransport>) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key, transport)
    }

    pub fn with_key(config: LiveConfig, api_key: Option<String>, transport: Box<dyn HttpTransport>) -> Self {
        Self {
            config,
            api_key,
            transport,
        }
    }

    pub fn request_body(&self, req: &GeneratorRequest) -> String {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        })
        .to_string()
    }

    fn headers(&self) -> Vec<(String, String)> {
        self.api_key
            .iter()
            .map(|k| ("Authorization".to_string(), format!("Bearer {k}")))
            .collect()
    }

    pub fn parse_response(body: &str, req: &GeneratorRequest) -> Result<GeneratorResponse> {
        let value: Value =
            serde_json::from_str(body).map_err(|e| Error::MalformedResponse(format!("invalid JSON: {e}")))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::MalformedResponse("missing choices[0].message.content".into()))?
            .to_string();
        let usage = |field: &str| value.pointer(&format!("/usage/{field}")).and_then(Value::as_u64);
        Ok(GeneratorResponse {
            prompt_tokens: usage("prompt_tokens").unwrap_or_else(|| whitespace_tokens(&req.prompt) as u64),
            completion_tokens: usage("completion_tokens").unwrap_or_else(|| whitespace_tokens(&text) as u64),
            text,
        })
    }
}

impl Backend for LiveBackend {
    fn name(&self) -> &'static str {
        "live"
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse> {
        let body = self.request_body(req);
        let headers = self.headers();
        let attempts = self.config.retry.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.transport.post_json(&self.config.endpoint, &headers, &body) {
                Ok(raw) => return Self::parse_response(&raw, req),
                Err(TransportError::Fatal(m)) => {
                    return Err(Error::GeneratorUnavailable {
                        attempts: attempt + 1,
                        message: m,
                    })
                }
                Err(TransportError::Retryable(m)) => last = m,
            }
        }
        Err(Error::GeneratorUnavailable {
            attempts,
            message: last,
        })
    }
}

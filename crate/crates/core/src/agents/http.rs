use std::str::FromStr;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, AUTHORIZATION, RETRY_AFTER};
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::backend::{BackendError, CompletionBackend, SchemaId};
use super::AgentError;

pub const API_KEY_ENV: &str = "COVLOOP_API_KEY";

const DEFAULT_RETRY_AFTER: Duration = Duration::from_secs(1);

/// Wire adapter for one family of completion endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointProfile {
    /// Chat-completions style: bearer token, `choices[0].message.content`.
    OpenAiChat,
    /// generateContent style: key header, `{model}` placeholder in the URL.
    Gemini,
    /// `{"model", "prompt"}` in, `{"text"}` or a plain body out.
    Raw,
}

impl FromStr for EndpointProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai" | "openai-chat" => Ok(Self::OpenAiChat),
            "gemini" => Ok(Self::Gemini),
            "raw" => Ok(Self::Raw),
            other => Err(format!("unknown endpoint profile `{other}` (expected openai, gemini or raw)")),
        }
    }
}

impl EndpointProfile {
    fn url(self, endpoint: &str, model: &str) -> String {
        match self {
            Self::Gemini => endpoint.replace("{model}", model),
            _ => endpoint.to_owned(),
        }
    }

    fn body(self, model: &str, prompt: &str) -> Value {
        match self {
            Self::OpenAiChat => json!({
                "model": model,
                "messages": [{"role": "user", "content": prompt}],
                "response_format": {"type": "json_object"},
            }),
            Self::Gemini => json!({
                "contents": [{"role": "user", "parts": [{"text": prompt}]}],
                "generationConfig": {"responseMimeType": "application/json"},
            }),
            Self::Raw => json!({"model": model, "prompt": prompt}),
        }
    }

    fn extract(self, body: &str) -> Result<String, String> {
        let parsed = serde_json::from_str::<Value>(body);
        match self {
            Self::OpenAiChat => parsed
                .ok()
                .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(str::to_owned))
                .ok_or_else(|| "response has no choices[0].message.content".into()),
            Self::Gemini => {
                let v = parsed.map_err(|e| format!("response is not JSON: {e}"))?;
                let parts = v["candidates"][0]["content"]["parts"]
                    .as_array()
                    .ok_or("response has no candidates[0].content.parts")?;
                Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect())
            }
            Self::Raw => Ok(match parsed {
                Ok(v) if v["text"].is_string() => v["text"].as_str().unwrap_or_default().to_owned(),
                _ => body.to_owned(),
            }),
        }
    }
}

/// One POST per completion against a configurable endpoint.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: Client,
    endpoint: String,
    model_id: String,
    profile: EndpointProfile,
    api_key: String,
    max_retries: u32,
}

impl HttpBackend {
    /// Reads the credential from `COVLOOP_API_KEY`.
    pub fn from_env(endpoint: &str, model_id: &str, profile: EndpointProfile) -> Result<Self, AgentError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| AgentError::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::new(endpoint, model_id, profile, key)
    }

    pub fn new(
        endpoint: &str,
        model_id: &str,
        profile: EndpointProfile,
        api_key: String,
    ) -> Result<Self, AgentError> {
        if endpoint.is_empty() {
            return Err(AgentError::Config("http backend needs an endpoint URL".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_owned(),
            model_id: model_id.to_owned(),
            profile,
            api_key,
            max_retries: 3,
        })
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n.max(1);
        self
    }
}

fn retry_after(headers: &HeaderMap) -> Duration {
    headers
        .get(RETRY_AFTER)
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map_or(DEFAULT_RETRY_AFTER, Duration::from_secs_f64)
}

impl CompletionBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn max_retries(&self) -> u32 {
        self.max_retries
    }

    fn send(&self, prompt: &str, _schema: SchemaId) -> Result<String, BackendError> {
        let mut request = self
            .client
            .post(self.profile.url(&self.endpoint, &self.model_id))
            .json(&self.profile.body(&self.model_id, prompt));
        request = match self.profile {
            EndpointProfile::Gemini => request.header("x-goog-api-key", &self.api_key),
            _ => request.header(AUTHORIZATION, format!("Bearer {}", self.api_key)),
        };
        let response = request.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::RateLimited {
                retry_after: retry_after(response.headers()),
            });
        }
        let body = response.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = body.chars().take(200).collect();
            return Err(BackendError::Transport(format!("HTTP {status}: {snippet}")));
        }
        self.profile.extract(&body).map_err(BackendError::Transport)
    }
}

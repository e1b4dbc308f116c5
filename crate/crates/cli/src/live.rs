//! OpenAI-style chat-completion transport.

use std::time::Duration;

use anyhow::{Context, Result};
use mrp_core::annotate::{ChatRequest, Transport, TransportError};

pub const KEY_VAR: &str = "MRP_API_KEY";

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    key: String,
}

impl HttpTransport {
    pub fn from_env(url: &str, model: &str) -> Result<Self> {
        let key = std::env::var(KEY_VAR).with_context(|| format!("{KEY_VAR} is not set"))?;
        let client = reqwest::blocking::Client::builder().timeout(Duration::from_secs(120)).build()?;
        Ok(HttpTransport { client, url: url.into(), model: model.into(), key })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, r: &ChatRequest) -> Result<String, TransportError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": r.temperature,
            "messages": [{ "role": "user", "content": r.prompt }],
        });
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.key)
            .json(&body)
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Transient(status.to_string()));
        }
        if !status.is_success() {
            return Err(TransportError::Permanent(status.to_string()));
        }
        let v: serde_json::Value = resp.json().map_err(|e| TransportError::Transient(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| TransportError::Permanent("reply has no message content".into()))
    }
}

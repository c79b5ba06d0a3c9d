use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendConfig, CallContext, GenError};

/// Chat-completion client: `POST {base_url}/chat/completions` with a bearer
/// token read from the configured environment variable on every call.
#[derive(Debug)]
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key_env: String,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model_name.clone(),
            api_key_env: cfg.api_key_env.clone(),
        }
    }

    /// JSON request body for one completion.
    pub fn request_body(model: &str, temperature: f64, prompt: &str) -> Value {
        json!({
            "model": model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
            "response_format": {"type": "json_object"},
        })
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(&self, rendered: &str, ctx: &CallContext) -> Result<String, GenError> {
        let key = std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GenError::AuthError(format!("environment variable {} is not set", self.api_key_env)))?;
        let body = Self::request_body(&self.model, ctx.temperature, rendered);
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| GenError::TransportError {
                status: None,
                message: e.to_string(),
            })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GenError::TransportError {
                status: Some(status),
                message: e.to_string(),
            })?;
        if !(200..300).contains(&status) {
            return Err(GenError::TransportError {
                status: Some(status),
                message: text.chars().take(200).collect(),
            });
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| GenError::MalformedResponse(format!("response envelope: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GenError::MalformedResponse("response has no choices[0].message.content".into()))
    }
}

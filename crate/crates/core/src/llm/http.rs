//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatExchange, LlmError, Sampling};

pub const TIMEOUT: Duration = Duration::from_secs(60);
pub const TRANSPORT_RETRIES: usize = 2;
const BACKOFF: Duration = Duration::from_millis(250);

pub struct HttpBackend {
    name: String,
    endpoint: String,
    model: String,
    api_key: String,
    sampling: Sampling,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("name", &self.name)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish()
    }
}

impl HttpBackend {
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        sampling: Sampling,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(TIMEOUT))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name: name.into(),
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: api_key.into(),
            sampling,
            agent,
        }
    }

    /// Request body in the chat-completions wire format. Sampling values are
    /// forwarded exactly as given in the exchange.
    pub fn request_body(exchange: &ChatExchange) -> Value {
        let mut body = json!({
            "model": exchange.model,
            "messages": exchange.messages,
            "temperature": exchange.sampling.temperature,
            "top_p": exchange.sampling.top_p,
            "stream": false,
        });
        if let Some(seed) = exchange.sampling.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => LlmError::Timeout,
                other => LlmError::Transport(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(LlmError::AuthFailure(format!("HTTP {status}")));
        }
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(format!("invalid response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transport("response has no choices[0].message.content".into()))
    }
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn sampling(&self) -> Sampling {
        self.sampling
    }

    fn complete(&self, exchange: &ChatExchange) -> Result<String, LlmError> {
        exchange.validate()?;
        let body = Self::request_body(exchange);
        let mut delay = BACKOFF;
        let mut last = None;
        for attempt in 0..=TRANSPORT_RETRIES {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e @ (LlmError::Transport(_) | LlmError::Timeout)) => {
                    log::warn!("{}: attempt {} failed: {e}", self.name, attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or(LlmError::Timeout))
    }
}

//! Chat-completion client for the generation chain.

use std::path::Path;
use std::thread;
use std::time::Duration;

use base64::Engine;
use contrastforge_core::prompt::TemplateId;
use serde_json::{json, Value};

use crate::{Error, Result};

pub const TOKEN_ENV: &str = "CONTRASTFORGE_BACKEND_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub template_id: TemplateId,
    pub item_id: String,
    pub text_input: String,
    pub image_ref: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Core(contrastforge_core::Error::InvalidInput(format!("{} for `{}`", m, self.item_id))));
        match self.template_id {
            TemplateId::Describe if self.image_ref.as_deref().is_none_or(str::is_empty) => bad("describe needs an image_ref"),
            TemplateId::Mask | TemplateId::Complete | TemplateId::Direct if self.text_input.trim().is_empty() => {
                bad("text input is empty")
            }
            _ => Ok(()),
        }
    }
}

/// Anything that turns a rendered prompt into generated text.
pub trait Generator: Sync {
    fn generate(&self, req: &GenerationRequest, prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads the auth token from the environment.
    pub fn with_env_token(mut self) -> Self {
        self.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        self
    }
}

pub struct BackendClient {
    config: BackendConfig,
    agent: ureq::Agent,
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if body.chars().count() > 200 {
        s.push('…');
    }
    s
}

/// Remote URLs and data URLs pass through; local files are inlined as
/// base64 data URLs.
pub fn image_url(image_ref: &str) -> Result<String> {
    if ["http://", "https://", "data:"].iter().any(|p| image_ref.starts_with(p)) {
        return Ok(image_ref.to_string());
    }
    let path = Path::new(image_ref);
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    Ok(format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
}

pub fn request_body(req: &GenerationRequest, prompt: &str) -> Result<Value> {
    let content = match &req.image_ref {
        Some(image) if req.template_id == TemplateId::Describe => json!([
            {"type": "text", "text": prompt},
            {"type": "image_url", "image_url": {"url": image_url(image)?}},
        ]),
        _ => json!(prompt),
    };
    let mut body = json!({
        "model": req.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": req.temperature,
    });
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    Ok(body)
}

/// Text of the first choice; content may be a string or a list of parts.
pub fn parse_response(body: &str) -> Result<String> {
    let malformed = |m: &str| Error::Backend { status: Some(200), message: format!("{m}: {}", excerpt(body)) };
    let v: Value = serde_json::from_str(body).map_err(|_| malformed("response is not JSON"))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let text: String = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            if text.is_empty() {
                Err(malformed("no text content in first choice"))
            } else {
                Ok(text)
            }
        }
        _ => Err(malformed("missing choices[0].message.content")),
    }
}

impl BackendClient {
    pub fn new(config: BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, body: &str) -> std::result::Result<String, (bool, Error)> {
        let mut request = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.config.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = match request.send(body) {
            Ok(r) => r,
            Err(e) => return Err((true, Error::Backend { status: None, message: e.to_string() })),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, Error::Backend { status: Some(status), message: e.to_string() }))?;
        if status == 200 {
            return parse_response(&text).map_err(|e| (false, e));
        }
        let transient = status == 408 || status == 429 || status >= 500;
        Err((transient, Error::Backend { status: Some(status), message: excerpt(&text) }))
    }
}

impl Generator for BackendClient {
    /// Retries transport failures and 408/429/5xx with exponential backoff.
    fn generate(&self, req: &GenerationRequest, prompt: &str) -> Result<String> {
        req.validate()?;
        let body = request_body(req, prompt)?.to_string();
        let mut delay = self.config.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((true, _)) if attempt < self.config.max_attempts => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err((_, e)) => return Err(e),
            }
        }
    }
}

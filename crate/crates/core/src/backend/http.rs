use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::thread;
use std::time::{Duration, Instant};

use super::{
    decode_png_b64, encode_png_b64, Backend, BackendError, EmbedImageBody, EmbedTextBody,
    EmbeddingReply, EmbeddingSpace, EmbeddingVector, ErrorReply, GenRequest, GenResult,
    GenerateBody, GenerateReply, HealthReply,
};

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub url: String,
    pub timeout_secs: f64,
    /// Extra attempts after a retryable failure.
    pub retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8700".to_string(),
            timeout_secs: 120.0,
            retries: 2,
            retry_backoff_ms: 250,
        }
    }
}

/// Wire-protocol client. Cheap to share across threads.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    base: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if !(config.url.starts_with("http://") || config.url.starts_with("https://")) {
            return Err(BackendError::InvalidRequest(format!(
                "backend url `{}` must start with http:// or https://",
                config.url
            )));
        }
        if !(config.timeout_secs.is_finite() && config.timeout_secs > 0.0) {
            return Err(BackendError::InvalidRequest("timeout must be > 0".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let base = config.url.trim_end_matches('/').to_string();
        Ok(Self {
            config,
            agent,
            base,
        })
    }

    pub fn health(&self) -> Result<HealthReply, BackendError> {
        self.with_retries(|| {
            let resp = self
                .agent
                .get(format!("{}/v1/health", self.base))
                .call()
                .map_err(|e| self.map_transport(e))?;
            read_reply(resp)
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R, BackendError> {
        let url = format!("{}{}", self.base, route);
        self.with_retries(|| {
            let resp = self
                .agent
                .post(&url)
                .send_json(body)
                .map_err(|e| self.map_transport(e))?;
            read_reply(resp)
        })
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    log::warn!("backend call failed ({e}); retry {attempt}/{}", self.config.retries);
                    thread::sleep(Duration::from_millis(self.config.retry_backoff_ms * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }

    fn map_transport(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(Duration::from_secs_f64(self.config.timeout_secs)),
            ureq::Error::Json(e) => BackendError::InvalidResponse(e.to_string()),
            other => BackendError::Transport(other.to_string()),
        }
    }

    fn embed(&self, image: &RgbImage, space: EmbeddingSpace) -> Result<EmbeddingVector, BackendError> {
        let body = EmbedImageBody {
            image_png_b64: encode_png_b64(image),
            space,
        };
        let reply: EmbeddingReply = self.post("/v1/embed/image", &body)?;
        reply.into_vector(space)
    }
}

fn read_reply<R: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<R, BackendError> {
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .with_config()
        .limit(MAX_BODY_BYTES)
        .read_to_string()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        let message = serde_json::from_str::<ErrorReply>(&text)
            .map(|e| e.error)
            .unwrap_or(text);
        return Err(BackendError::Remote { status, message });
    }
    serde_json::from_str(&text).map_err(|e| BackendError::InvalidResponse(e.to_string()))
}

impl Backend for HttpBackend {
    fn backend_id(&self) -> String {
        format!("http:{}", self.base)
    }

    fn generate(&self, req: &GenRequest) -> Result<GenResult, BackendError> {
        req.validate()?;
        let start = Instant::now();
        let body = GenerateBody {
            init_png_b64: encode_png_b64(&req.init_image.rgb),
            prompt: req.prompt.clone(),
            negative_prompt: req.negative_prompt.clone(),
            strength: req.denoise_strength,
            guidance: req.guidance_scale,
            steps: req.steps,
            seed: req.seed,
        };
        let reply: GenerateReply = self.post("/v1/generate", &body)?;
        let image = decode_png_b64(&reply.image_png_b64).map_err(BackendError::InvalidResponse)?;
        if image.dimensions() != req.dims() {
            return Err(BackendError::DimensionMismatch {
                expected: req.dims(),
                got: image.dimensions(),
            });
        }
        Ok(GenResult {
            image,
            backend_id: reply.backend_id,
            latency_ms: start.elapsed().as_millis() as u64,
        })
    }

    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError> {
        self.embed(image, EmbeddingSpace::ClipImage)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let reply: EmbeddingReply = self.post(
            "/v1/embed/text",
            &EmbedTextBody {
                text: text.to_string(),
            },
        )?;
        reply.into_vector(EmbeddingSpace::ClipText)
    }

    fn embed_inception(&self, image: &RgbImage) -> Result<EmbeddingVector, BackendError> {
        self.embed(image, EmbeddingSpace::Inception)
    }
}

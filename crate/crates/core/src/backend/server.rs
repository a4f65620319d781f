use serde::Serialize;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{
    decode_png_b64, encode_png_b64, Backend, BackendError, EmbedImageBody, EmbedTextBody,
    EmbeddingReply, EmbeddingSpace, ErrorReply, GenRequest, GenerateBody, GenerateReply,
    HealthReply,
};
use crate::composer::CompositeImage;

/// Request counters. `max_in_flight` is the peak number of requests being
/// served at once.
#[derive(Debug, Default)]
pub struct ServerStats {
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    requests: AtomicUsize,
}

impl ServerStats {
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Serialize)]
struct StatsReply {
    requests: usize,
    max_in_flight: usize,
}

/// Serves a [`Backend`] over the wire protocol, one thread per request.
pub struct MockServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    stats: Arc<ServerStats>,
    acceptor: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port). `delay` is added to every
    /// request, which makes concurrency observable in tests.
    pub fn start(
        addr: &str,
        backend: Arc<dyn Backend>,
        delay: Option<Duration>,
    ) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let stats = Arc::new(ServerStats::default());
        let acceptor = {
            let server = Arc::clone(&server);
            let stats = Arc::clone(&stats);
            thread::spawn(move || {
                for request in server.incoming_requests() {
                    let backend = Arc::clone(&backend);
                    let stats = Arc::clone(&stats);
                    thread::spawn(move || {
                        stats.enter();
                        if let Some(d) = delay {
                            thread::sleep(d);
                        }
                        handle(request, backend.as_ref(), &stats);
                        stats.leave();
                    });
                }
            })
        };
        Ok(Self {
            addr,
            server,
            stats,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &ServerStats {
        &self.stats
    }

    /// Blocks until the listener stops.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

type Reply = (u16, String);

fn json<T: Serialize>(status: u16, body: &T) -> Reply {
    (status, serde_json::to_string(body).expect("reply serialises"))
}

fn error(status: u16, message: impl Into<String>) -> Reply {
    json(status, &ErrorReply { error: message.into() })
}

fn backend_error(e: BackendError) -> Reply {
    match e {
        BackendError::InvalidRequest(m) => error(400, m),
        other => error(500, other.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| error(400, format!("bad payload: {e}")))
}

fn route(method: &tiny_http::Method, url: &str, body: &str, backend: &dyn Backend, stats: &ServerStats) -> Result<Reply, Reply> {
    use tiny_http::Method;
    match (method, url) {
        (Method::Get, "/v1/health") => Ok(json(
            200,
            &HealthReply {
                backend_id: backend.backend_id(),
                models: vec![backend.backend_id()],
            },
        )),
        (Method::Get, "/v1/stats") => Ok(json(
            200,
            &StatsReply {
                requests: stats.requests(),
                max_in_flight: stats.max_in_flight(),
            },
        )),
        (Method::Post, "/v1/generate") => {
            let b: GenerateBody = parse(body)?;
            let rgb = decode_png_b64(&b.init_png_b64)
                .map_err(|e| error(400, format!("init_png_b64: {e}")))?;
            let req = GenRequest {
                init_image: CompositeImage {
                    rgb,
                    mask_ref: None,
                    style_ref: "wire".into(),
                },
                prompt: b.prompt,
                negative_prompt: b.negative_prompt,
                denoise_strength: b.strength,
                guidance_scale: b.guidance,
                steps: b.steps,
                seed: b.seed,
            };
            let out = backend.generate(&req).map_err(backend_error)?;
            Ok(json(
                200,
                &GenerateReply {
                    image_png_b64: encode_png_b64(&out.image),
                    backend_id: out.backend_id,
                },
            ))
        }
        (Method::Post, "/v1/embed/image") => {
            let b: EmbedImageBody = parse(body)?;
            let img = decode_png_b64(&b.image_png_b64)
                .map_err(|e| error(400, format!("image_png_b64: {e}")))?;
            let v = match b.space {
                EmbeddingSpace::ClipImage => backend.embed_image(&img),
                EmbeddingSpace::Inception => backend.embed_inception(&img),
                EmbeddingSpace::ClipText => {
                    return Err(error(400, "space: clip_text is not an image space"))
                }
            }
            .map_err(backend_error)?;
            Ok(json(200, &EmbeddingReply { dim: v.dim(), values: v.values }))
        }
        (Method::Post, "/v1/embed/text") => {
            let b: EmbedTextBody = parse(body)?;
            let v = backend.embed_text(&b.text).map_err(backend_error)?;
            Ok(json(200, &EmbeddingReply { dim: v.dim(), values: v.values }))
        }
        _ => Err(error(404, format!("no route for {method} {url}"))),
    }
}

fn handle(mut request: tiny_http::Request, backend: &dyn Backend, stats: &ServerStats) {
    let mut body = String::new();
    let (status, text) = match request.as_reader().read_to_string(&mut body) {
        Err(e) => error(400, format!("unreadable body: {e}")),
        Ok(_) => {
            let method = request.method().clone();
            let url = request.url().to_string();
            route(&method, &url, &body, backend, stats).unwrap_or_else(|e| e)
        }
    };
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    let response = tiny_http::Response::from_string(text)
        .with_status_code(status)
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

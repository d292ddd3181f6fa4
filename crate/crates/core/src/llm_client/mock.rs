//! Mock completion server backed by [`ToyLmBackend`].
//!
//! Besides `POST /v1/complete` it exposes `GET /v1/probe`, which reports the
//! number of requests currently being handled and the peak seen so far, and
//! `POST /v1/probe/reset`.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::{CompletionRequest, ToyLmBackend};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockOptions {
    /// Artificial latency per request.
    pub delay: Duration,
    /// Percentage (0-100) of requests answered with HTTP 500. The choice is a
    /// pure function of the request seed, so a failing request keeps failing.
    pub fail_percent: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub in_flight: usize,
    pub max_in_flight: usize,
    pub requests: usize,
}

#[derive(Debug, Default)]
struct Probe {
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    requests: AtomicUsize,
}

impl Probe {
    fn enter(&self) -> InFlight<'_> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(self)
    }

    fn stats(&self) -> ProbeStats {
        ProbeStats {
            in_flight: self.in_flight.load(Ordering::SeqCst),
            max_in_flight: self.max_in_flight.load(Ordering::SeqCst),
            requests: self.requests.load(Ordering::SeqCst),
        }
    }

    fn reset(&self) {
        self.max_in_flight
            .store(self.in_flight.load(Ordering::SeqCst), Ordering::SeqCst);
        self.requests.store(0, Ordering::SeqCst);
    }
}

struct InFlight<'a>(&'a Probe);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

struct MockState {
    backend: ToyLmBackend,
    options: MockOptions,
    probe: Probe,
}

fn injected_failure(seed: u64, percent: u8) -> bool {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z % 100 < u64::from(percent)
}

async fn complete(State(state): State<Arc<MockState>>, Json(req): Json<CompletionRequest>) -> Response {
    let _guard = state.probe.enter();
    if !state.options.delay.is_zero() {
        tokio::time::sleep(state.options.delay).await;
    }
    if injected_failure(req.seed.unwrap_or(0), state.options.fail_percent) {
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    match state.backend.respond(&req) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn probe(State(state): State<Arc<MockState>>) -> Json<ProbeStats> {
    Json(state.probe.stats())
}

async fn reset(State(state): State<Arc<MockState>>) -> StatusCode {
    state.probe.reset();
    StatusCode::NO_CONTENT
}

fn router(state: Arc<MockState>) -> Router {
    Router::new()
        .route("/v1/complete", post(complete))
        .route("/v1/probe", get(probe))
        .route("/v1/probe/reset", post(reset))
        .with_state(state)
}

/// Serves until the listener fails. Used by the `mock-llm` command.
pub async fn serve(listener: TcpListener, backend: ToyLmBackend, options: MockOptions) -> std::io::Result<()> {
    let state = Arc::new(MockState {
        backend,
        options,
        probe: Probe::default(),
    });
    axum::serve(listener, router(state)).await
}

/// A mock server running on a background task, shut down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port on the current tokio runtime.
    pub async fn start(backend: ToyLmBackend, options: MockOptions) -> std::io::Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            backend,
            options,
            probe: Probe::default(),
        });
        let (tx, rx) = oneshot::channel();
        let app = router(state.clone());
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> ProbeStats {
        self.state.probe.stats()
    }

    pub fn reset_probe(&self) {
        self.state.probe.reset();
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

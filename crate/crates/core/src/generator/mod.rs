//! Text-generator contract with exact call and token accounting.
//!
//! [`GeneratorClient`] wraps a [`Backend`] (live HTTP, rule-table mock, or
//! recorded replay), caps in-flight requests and keeps usage counters.

mod live;
mod mock;
mod replay;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::analysis::CostRecord;
use crate::error::{Error, Result};

pub use live::{HttpTransport, LiveBackend, LiveConfig, RetryPolicy, TransportError, UreqTransport};
pub use mock::{MockBackend, MockRule, MockRuleTable};
pub use replay::{request_key, RecordingBackend, ReplayBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    /// Zero keeps live runs as repeatable as the backend allows.
    pub temperature: f64,
}

impl GeneratorRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_output_tokens: 256,
            temperature: 0.0,
        }
    }

    pub fn with_max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl GeneratorResponse {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Something that turns a request into a response.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse>;
}

/// Counting semaphore for the in-flight cap.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a Gate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.free.lock().expect("gate poisoned") += 1;
        self.gate.cv.notify_one();
    }
}

/// Shareable generator handle. Safe to call from many threads.
pub struct GeneratorClient {
    backend: Box<dyn Backend>,
    gate: Gate,
    in_flight: usize,
    calls: AtomicU64,
    tokens: AtomicU64,
}

impl std::fmt::Debug for GeneratorClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorClient")
            .field("backend", &self.backend.name())
            .field("in_flight", &self.in_flight)
            .finish()
    }
}

impl GeneratorClient {
    pub const DEFAULT_IN_FLIGHT: usize = 4;

    pub fn new(backend: impl Backend + 'static) -> Self {
        Self::with_in_flight(Box::new(backend), Self::DEFAULT_IN_FLIGHT)
    }

    pub fn with_in_flight(backend: Box<dyn Backend>, in_flight: usize) -> Self {
        Self {
            backend,
            gate: Gate::new(in_flight),
            in_flight: in_flight.max(1),
            calls: AtomicU64::new(0),
            tokens: AtomicU64::new(0),
        }
    }

    pub fn mock(table: MockRuleTable) -> Self {
        Self::new(MockBackend::new(table))
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn in_flight_limit(&self) -> usize {
        self.in_flight
    }

    pub fn complete(&self, req: &GeneratorRequest) -> Result<GeneratorResponse> {
        if req.prompt.trim().is_empty() {
            return Err(Error::InvalidRequest("prompt must be non-empty".into()));
        }
        let resp = {
            let _permit = self.gate.acquire();
            self.backend.generate(req)?
        };
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.tokens.fetch_add(resp.total_tokens(), Ordering::SeqCst);
        Ok(resp)
    }

    pub fn usage_totals(&self) -> CostRecord {
        CostRecord {
            generator_calls: self.calls.load(Ordering::SeqCst),
            tokens: self.tokens.load(Ordering::SeqCst),
        }
    }

    pub fn reset_usage(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.tokens.store(0, Ordering::SeqCst);
    }
}

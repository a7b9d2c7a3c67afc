//! Record/replay of generator exchanges as one JSON file per request.
//!
//! Files are named by the SHA-256 of the canonical request, so a recorded
//! directory replays any run that issues the same requests, in any order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, GeneratorRequest, GeneratorResponse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Exchange {
    request: GeneratorRequest,
    response: GeneratorResponse,
}

/// Hex digest identifying a request.
pub fn request_key(req: &GeneratorRequest) -> String {
    let canonical = serde_json::to_string(req).expect("request serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn exchange_path(dir: &Path, req: &GeneratorRequest) -> PathBuf {
    dir.join(format!("{}.json", request_key(req)))
}

#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse> {
        let path = exchange_path(&self.dir, req);
        let text = fs::read_to_string(&path).map_err(|e| Error::GeneratorUnavailable {
            attempts: 1,
            message: format!("no recorded exchange at {}: {e}", path.display()),
        })?;
        let exchange: Exchange =
            serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(format!("{}: {e}", path.display())))?;
        if exchange.request != *req {
            return Err(Error::MalformedResponse(format!(
                "{} records a different request",
                path.display()
            )));
        }
        Ok(exchange.response)
    }
}

/// Wraps another backend and writes every successful exchange to `dir`.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { inner, dir })
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn name(&self) -> &'static str {
        "record"
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse> {
        let response = self.inner.generate(req)?;
        let exchange = Exchange {
            request: req.clone(),
            response: response.clone(),
        };
        let path = exchange_path(&self.dir, req);
        let mut body = serde_json::to_string_pretty(&exchange)?;
        body.push('\n');
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{MockBackend, MockRule, MockRuleTable};

    #[test]
    fn record_then_replay_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let table = MockRuleTable::new("C").with_rule(MockRule::new(["alpha"], "A. first"));
        let recorder = RecordingBackend::new(MockBackend::new(table), dir.path()).unwrap();
        let reqs = [GeneratorRequest::new("alpha beta"), GeneratorRequest::new("gamma")];
        let live: Vec<_> = reqs.iter().map(|r| recorder.generate(r).unwrap()).collect();

        let replay = ReplayBackend::new(dir.path());
        for (req, expected) in reqs.iter().zip(&live).rev() {
            assert_eq!(&replay.generate(req).unwrap(), expected);
        }
    }

    #[test]
    fn missing_exchange_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let replay = ReplayBackend::new(dir.path());
        assert!(matches!(
            replay.generate(&GeneratorRequest::new("never recorded")),
            Err(Error::GeneratorUnavailable { .. })
        ));
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = GeneratorRequest::new("p");
        let mut hot = base.clone();
        hot.temperature = 0.7;
        assert_ne!(request_key(&base), request_key(&hot));
        assert_ne!(request_key(&base), request_key(&base.clone().with_max_output_tokens(8)));
        assert_eq!(request_key(&base), request_key(&GeneratorRequest::new("p")));
    }
}

use std::time::Duration;

use super::wire::{ErrorBody, PredictRequest, PredictResponse, VocabBody, PREDICT_PATH, VOCAB_PATH};
use super::{Backend, BackendResponse};
use crate::canvas::Canvas;
use crate::error::{Error, Result};
use crate::tokens::Vocab;

/// HTTP client for a model server speaking the predict protocol.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    agent: ureq::Agent,
    base: String,
    vocab: Vocab,
}

impl RemoteBackend {
    /// Uses vocab constants supplied by the caller.
    pub fn new(base_url: &str, vocab: Vocab, timeout: Duration) -> Self {
        RemoteBackend {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            base: base_url.trim_end_matches('/').to_string(),
            vocab,
        }
    }

    /// Fetches the vocab constants from the server.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let base = base_url.trim_end_matches('/').to_string();
        let body: VocabBody = agent
            .get(&format!("{base}{VOCAB_PATH}"))
            .call()
            .map_err(transport_error)?
            .into_json()
            .map_err(|e| Error::Protocol(format!("malformed vocab body: {e}")))?;
        let vocab = Vocab::new(body.vocab_size, body.mask_id, body.eos_id)
            .map_err(|e| Error::Protocol(e.to_string()))?;
        Ok(RemoteBackend { agent, base, vocab })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }
}

fn transport_error(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Status(503, _) => Error::BackendUnavailable("model not ready (503)".into()),
        ureq::Error::Status(code, resp) => {
            let detail = resp.into_json::<ErrorBody>().map(|b| b.error).unwrap_or_default();
            Error::Protocol(format!("server answered {code}: {detail}"))
        }
        ureq::Error::Transport(t) => Error::BackendUnavailable(t.to_string()),
    }
}

impl Backend for RemoteBackend {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        if !canvas.has_masks() {
            return Err(Error::invalid("predict called on a canvas without masks"));
        }
        let request = PredictRequest::new(canvas, &self.vocab);
        let response = self
            .agent
            .post(&format!("{}{PREDICT_PATH}", self.base))
            .send_json(&request)
            .map_err(transport_error)?;
        let text = response
            .into_string()
            .map_err(|e| Error::BackendUnavailable(format!("reading response body: {e}")))?;
        let decoded: PredictResponse = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("malformed response body: {e}")))?;
        let decoded = BackendResponse::from(decoded);
        decoded.validate(canvas, &self.vocab)?;
        Ok(decoded)
    }

    fn descriptor(&self) -> String {
        format!("remote({})", self.base)
    }
}

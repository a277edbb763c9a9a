//! The model abstraction.
//!
//! A backend sees a canvas and reports, for each masked response cell, the
//! argmax token, its probability and the probability of EOS. Those three
//! numbers are everything the decoders read from the model.

mod remote;
mod scripted;
pub mod wire;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::canvas::{Canvas, CellId};
use crate::error::{Error, Result};
use crate::tokens::{TokenId, Vocab};

pub use remote::RemoteBackend;
pub use scripted::{ScriptedBackend, ScriptedScenario, ScriptedSuite, SuiteBackend, SuiteEntry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionStats {
    pub cell_id: CellId,
    pub predicted_token: TokenId,
    /// Probability of `predicted_token`.
    pub confidence: f64,
    pub eos_prob: f64,
}

/// One entry per masked cell, in canvas order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub stats: Vec<PositionStats>,
}

impl BackendResponse {
    /// Checks the response against the canvas it answers.
    pub fn validate(&self, canvas: &Canvas, vocab: &Vocab) -> Result<()> {
        let masked = canvas.cells().iter().filter(|c| c.is_masked());
        let mut n = 0;
        for (cell, s) in masked.zip(&self.stats) {
            n += 1;
            if cell.id != s.cell_id {
                return Err(Error::Protocol(format!(
                    "entry {n} refers to cell {} but masked cell {} was expected",
                    s.cell_id, cell.id
                )));
            }
            if s.predicted_token == vocab.mask_id() || !vocab.contains(s.predicted_token) {
                return Err(Error::Protocol(format!(
                    "cell {} predicts invalid token {}",
                    s.cell_id, s.predicted_token
                )));
            }
            if !(0.0..=1.0).contains(&s.confidence) || !(0.0..=1.0).contains(&s.eos_prob) {
                return Err(Error::Protocol(format!(
                    "cell {} carries probabilities outside [0, 1]",
                    s.cell_id
                )));
            }
        }
        let expected = canvas.mask_count();
        if self.stats.len() != expected {
            return Err(Error::Protocol(format!(
                "{} stats entries for {expected} masked cells",
                self.stats.len()
            )));
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn vocab(&self) -> Vocab;

    /// Per-position statistics for every masked cell of `canvas`.
    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse>;

    /// Short human-readable description recorded in trace headers.
    fn descriptor(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn vocab(&self) -> Vocab {
        (**self).vocab()
    }
    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        (**self).predict(canvas)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn vocab(&self) -> Vocab {
        (**self).vocab()
    }
    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        (**self).predict(canvas)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn vocab(&self) -> Vocab {
        (**self).vocab()
    }
    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        (**self).predict(canvas)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

/// Calls the backend and checks the contract on the way back.
pub(crate) fn query<B: Backend + ?Sized>(backend: &B, canvas: &Canvas) -> Result<BackendResponse> {
    if !canvas.has_masks() {
        return Err(Error::invalid("predict called on a canvas without masks"));
    }
    let response = backend.predict(canvas)?;
    response.validate(canvas, &backend.vocab())?;
    Ok(response)
}

/// Retries retryable failures with a fixed pause between attempts.
#[derive(Debug, Clone)]
pub struct Retrying<B> {
    inner: B,
    attempts: usize,
    pause: Duration,
}

impl<B: Backend> Retrying<B> {
    pub fn new(inner: B, attempts: usize, pause: Duration) -> Self {
        Retrying {
            inner,
            attempts: attempts.max(1),
            pause,
        }
    }
}

impl<B: Backend> Backend for Retrying<B> {
    fn vocab(&self) -> Vocab {
        self.inner.vocab()
    }

    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        let mut attempt = 1;
        loop {
            match self.inner.predict(canvas) {
                Err(e) if e.is_retryable() && attempt < self.attempts => {
                    attempt += 1;
                    thread::sleep(self.pause);
                }
                other => return other,
            }
        }
    }

    fn descriptor(&self) -> String {
        self.inner.descriptor()
    }
}

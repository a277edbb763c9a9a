//! JSON bodies of `POST /v1/predict`.
//!
//! Masked cells travel as `"token": null`. Both sides ignore unknown fields.

use serde::{Deserialize, Serialize};

use super::{Backend, BackendResponse, PositionStats};
use crate::canvas::{Canvas, Cell, CellId, CellWire};
use crate::error::{Error, Result};
use crate::tokens::{TokenId, Vocab};

pub const PREDICT_PATH: &str = "/v1/predict";
pub const VOCAB_PATH: &str = "/v1/vocab";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireVocab {
    pub mask_id: TokenId,
    pub eos_id: TokenId,
}

#[derive(Serialize, Deserialize)]
pub struct PredictRequest {
    pub prompt: Vec<TokenId>,
    pub(crate) cells: Vec<CellWire>,
    pub vocab: WireVocab,
}

impl PredictRequest {
    pub fn new(canvas: &Canvas, vocab: &Vocab) -> Self {
        PredictRequest {
            prompt: canvas.prompt().to_vec(),
            cells: canvas.cells().iter().map(CellWire::from).collect(),
            vocab: WireVocab {
                mask_id: vocab.mask_id(),
                eos_id: vocab.eos_id(),
            },
        }
    }

    pub fn into_canvas(self) -> Result<Canvas> {
        Canvas::from_parts(self.prompt, self.cells.into_iter().map(Cell::from).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireStat {
    pub id: CellId,
    pub predicted: TokenId,
    pub confidence: f64,
    pub eos_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub stats: Vec<WireStat>,
}

impl From<&BackendResponse> for PredictResponse {
    fn from(r: &BackendResponse) -> Self {
        PredictResponse {
            stats: r
                .stats
                .iter()
                .map(|s| WireStat {
                    id: s.cell_id,
                    predicted: s.predicted_token,
                    confidence: s.confidence,
                    eos_prob: s.eos_prob,
                })
                .collect(),
        }
    }
}

impl From<PredictResponse> for BackendResponse {
    fn from(r: PredictResponse) -> Self {
        BackendResponse {
            stats: r
                .stats
                .into_iter()
                .map(|s| PositionStats {
                    cell_id: s.id,
                    predicted_token: s.predicted,
                    confidence: s.confidence,
                    eos_prob: s.eos_prob,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabBody {
    pub vocab_size: u32,
    pub mask_id: TokenId,
    pub eos_id: TokenId,
}

impl From<Vocab> for VocabBody {
    fn from(v: Vocab) -> Self {
        VocabBody {
            vocab_size: v.vocab_size(),
            mask_id: v.mask_id(),
            eos_id: v.eos_id(),
        }
    }
}

/// Server side of the predict endpoint over any in-process backend.
///
/// Returns the HTTP status and JSON body to send. Used to serve scripted
/// scenarios over the same protocol a real model server speaks.
pub fn handle_predict<B: Backend + ?Sized>(backend: &B, body: &[u8]) -> (u16, String) {
    let bad = |msg: String| (400, serde_json::to_string(&ErrorBody { error: msg }).unwrap());
    let req: PredictRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return bad(format!("malformed request: {e}")),
    };
    let vocab = backend.vocab();
    if req.vocab.mask_id != vocab.mask_id() || req.vocab.eos_id != vocab.eos_id() {
        return bad("vocab constants do not match the served model".into());
    }
    let canvas = match req.into_canvas() {
        Ok(c) => c,
        Err(e) => return bad(e.to_string()),
    };
    if !canvas.has_masks() {
        return bad("canvas has no masked cells".into());
    }
    match backend.predict(&canvas) {
        Ok(r) => (200, serde_json::to_string(&PredictResponse::from(&r)).unwrap()),
        Err(Error::BackendUnavailable(m)) => (503, serde_json::to_string(&ErrorBody { error: m }).unwrap()),
        Err(e) => bad(e.to_string()),
    }
}

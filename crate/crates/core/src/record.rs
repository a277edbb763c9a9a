use serde::{Deserialize, Serialize};

use crate::canvas::CellId;
use crate::tokens::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Initial length adjustment.
    Stage1,
    /// Denoising with mask insertion.
    Stage2,
    /// Fixed-length denoising.
    Baseline,
}

/// One backend call and what the controller did with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub phase: Phase,
    /// Zero-based pass counter within the phase.
    pub iteration: usize,
    /// Mean terminal EOS confidence; absent for baseline steps, which never
    /// look at it.
    pub eos_confidence: Option<f64>,
    pub filled_cell_ids: Vec<CellId>,
    pub expansion_cell_id: Option<CellId>,
    pub length_before: usize,
    pub length_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub prompt_id: String,
    pub final_tokens: Vec<TokenId>,
    pub n_token: usize,
    pub e_token: usize,
    pub e_ratio: f64,
    /// Backend calls made by the run.
    pub iterations: usize,
    /// Stage-2 mask insertions.
    pub expansions: usize,
    pub trace: Vec<StepEvent>,
}

impl RunRecord {
    /// Stage-1 passes that appended masks.
    pub fn stage1_growths(&self) -> usize {
        self.trace
            .iter()
            .filter(|e| e.phase == Phase::Stage1 && e.length_after > e.length_before)
            .count()
    }
}

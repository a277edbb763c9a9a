//! Denoising machinery shared by both decoders, and the fixed-length
//! baseline.
//!
//! Every selection is deterministic: confidence ties go to the cell that
//! comes first in the response.

use std::collections::{HashMap, HashSet};

use crate::backend::{self, Backend, BackendResponse, PositionStats};
use crate::canvas::{Canvas, Cell, CellId, CellState};
use crate::error::{Error, Result};
use crate::metrics;
use crate::record::{Phase, RunRecord, StepEvent};
use crate::tokens::{TokenId, Vocab};

/// Mean EOS evidence over the last `w_eos` response cells.
///
/// A masked cell contributes the backend's EOS probability, a committed cell
/// 1.0 if it holds EOS and 0.0 otherwise. Terms are summed left to right.
pub fn compute_eos_confidence(
    cells: &[Cell],
    stats: &BackendResponse,
    w_eos: usize,
    vocab: &Vocab,
) -> Result<f64> {
    if w_eos == 0 || w_eos > cells.len() {
        return Err(Error::invalid(format!(
            "EOS window {w_eos} does not fit a response of {} cells",
            cells.len()
        )));
    }
    let eos_by_id: HashMap<CellId, f64> = stats.stats.iter().map(|s| (s.cell_id, s.eos_prob)).collect();
    let mut sum = 0.0;
    for cell in &cells[cells.len() - w_eos..] {
        sum += match cell.state {
            CellState::Committed(t) if t == vocab.eos_id() => 1.0,
            CellState::Committed(_) => 0.0,
            CellState::Masked => *eos_by_id
                .get(&cell.id)
                .ok_or_else(|| Error::invalid(format!("no statistics for masked window cell {}", cell.id)))?,
        };
    }
    Ok(sum / w_eos as f64)
}

/// Cells whose confidence exceeds `tau_high`, in canvas order. When none
/// does, the single most confident cell.
pub fn select_fill_set(stats: &BackendResponse, tau_high: f64) -> Vec<CellId> {
    let above: Vec<CellId> = stats
        .stats
        .iter()
        .filter(|s| s.confidence > tau_high)
        .map(|s| s.cell_id)
        .collect();
    if !above.is_empty() {
        return above;
    }
    most_confident(&stats.stats)
        .map(|s| s.cell_id)
        .into_iter()
        .collect()
}

fn most_confident(stats: &[PositionStats]) -> Option<&PositionStats> {
    stats
        .iter()
        .fold(None, |best: Option<&PositionStats>, s| match best {
            Some(b) if b.confidence >= s.confidence => Some(b),
            _ => Some(s),
        })
}

/// Cells whose confidence is below `tau_low`, in canvas order.
pub fn select_candidates(stats: &BackendResponse, tau_low: f64) -> Vec<CellId> {
    stats
        .stats
        .iter()
        .filter(|s| s.confidence < tau_low)
        .map(|s| s.cell_id)
        .collect()
}

/// Writes the predicted token into every cell of `fill_set`.
pub fn commit_fills(
    canvas: &mut Canvas,
    stats: &BackendResponse,
    fill_set: &[CellId],
    vocab: &Vocab,
) -> Result<()> {
    if fill_set.is_empty() {
        return Ok(());
    }
    let wanted: HashSet<CellId> = fill_set.iter().copied().collect();
    let predicted: HashMap<CellId, TokenId> = stats
        .stats
        .iter()
        .filter(|s| wanted.contains(&s.cell_id))
        .map(|s| (s.cell_id, s.predicted_token))
        .collect();
    if let Some(missing) = fill_set.iter().find(|id| !predicted.contains_key(id)) {
        return Err(Error::invalid(format!("no prediction for fill cell {missing}")));
    }
    let positions: Vec<(usize, TokenId)> = canvas
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(pos, c)| predicted.get(&c.id).map(|&t| (pos, t)))
        .collect();
    if positions.len() != predicted.len() {
        return Err(Error::invalid("fill set names cells missing from the canvas"));
    }
    for (pos, token) in positions {
        canvas.commit_at(pos, token, vocab)?;
    }
    Ok(())
}

/// The `k` most confident cells, ties to the earlier cell, in canvas order.
fn top_k(stats: &[PositionStats], k: usize) -> Vec<CellId> {
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        stats[b]
            .confidence
            .total_cmp(&stats[a].confidence)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order.into_iter().map(|i| stats[i].cell_id).collect()
}

/// Fixed-length denoising with low-confidence remasking.
///
/// With `M` masks left and `R` steps left, each step keeps the
/// `ceil(M / R)` most confident predictions.
pub fn baseline_decode<B: Backend + ?Sized>(
    prompt_id: &str,
    prompt: Vec<TokenId>,
    length: usize,
    steps: usize,
    backend: &B,
) -> Result<RunRecord> {
    if steps == 0 {
        return Err(Error::invalid("baseline needs at least one step"));
    }
    let vocab = backend.vocab();
    let mut canvas = Canvas::new(prompt, length, &vocab)?;
    let mut trace = Vec::new();
    for step in 0..steps {
        let masks = canvas.mask_count();
        if masks == 0 {
            break;
        }
        let remaining_steps = steps - step;
        let quota = masks.div_ceil(remaining_steps);
        let stats = backend::query(backend, &canvas)?;
        let fills = top_k(&stats.stats, quota);
        commit_fills(&mut canvas, &stats, &fills, &vocab)?;
        trace.push(StepEvent {
            phase: Phase::Baseline,
            iteration: step,
            eos_confidence: None,
            filled_cell_ids: fills,
            expansion_cell_id: None,
            length_before: length,
            length_after: length,
        });
    }
    let final_tokens = canvas
        .final_tokens()
        .ok_or_else(|| Error::invalid("baseline finished with masks left"))?;
    Ok(metrics::assemble_record(
        prompt_id,
        final_tokens,
        trace,
        0,
        &vocab,
    ))
}

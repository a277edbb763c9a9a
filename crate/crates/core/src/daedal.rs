//! Two-stage dynamic-length decoding.
//!
//! Stage 1 grows a fully masked canvas from `l_init` until the model is
//! confident the response ends inside it (or `l_max` is reached). Stage 2
//! denoises by committing confident predictions, and while the EOS signal
//! stays weak it replaces the least confident masked cell with a block of
//! `e_factor` masks, opening room where the model struggles.
//!
//! The response never exceeds `l_max`: an expansion at length `L` inserts at
//! most `l_max - L + 1` masks.

use std::collections::HashSet;

use crate::backend::{self, Backend, BackendResponse, PositionStats};
use crate::canvas::{Canvas, CellId};
use crate::config::DaedalConfig;
use crate::decode::{commit_fills, compute_eos_confidence, select_fill_set};
use crate::error::{Error, Result};
use crate::metrics;
use crate::record::{Phase, RunRecord, StepEvent};
use crate::tokens::TokenId;

/// Initial length adjustment. Returns the still fully masked canvas and one
/// event per backend call.
pub fn stage1_adjust<B: Backend + ?Sized>(
    prompt: Vec<TokenId>,
    config: &DaedalConfig,
    backend: &B,
) -> Result<(Canvas, Vec<StepEvent>)> {
    config.validate()?;
    let vocab = backend.vocab();
    let mut canvas = Canvas::new(prompt, config.l_init, &vocab)?;
    let increment = config.stage1_increment();
    let mut events = Vec::new();
    while canvas.len() < config.l_max {
        let stats = backend::query(backend, &canvas)?;
        let eos_confidence = compute_eos_confidence(canvas.cells(), &stats, config.w_eos, &vocab)?;
        let length_before = canvas.len();
        let grow = eos_confidence < config.tau_eos;
        if grow {
            canvas.append_masks(increment.min(config.l_max - length_before))?;
        }
        events.push(StepEvent {
            phase: Phase::Stage1,
            iteration: events.len(),
            eos_confidence: Some(eos_confidence),
            filled_cell_ids: Vec::new(),
            expansion_cell_id: None,
            length_before,
            length_after: canvas.len(),
        });
        if !grow {
            break;
        }
    }
    Ok((canvas, events))
}

/// Least confident cell below `tau_low` that is still masked; ties go to the
/// earlier cell.
fn expansion_point(stats: &BackendResponse, filled: &HashSet<CellId>, tau_low: f64) -> Option<CellId> {
    stats
        .stats
        .iter()
        .filter(|s| s.confidence < tau_low && !filled.contains(&s.cell_id))
        .fold(None, |best: Option<&PositionStats>, s| match best {
            Some(b) if b.confidence <= s.confidence => Some(b),
            _ => Some(s),
        })
        .map(|s| s.cell_id)
}

/// Iterative denoising with mask insertion. Runs until no mask remains.
/// Returns the finished canvas, the events, and the number of insertions.
pub fn stage2_decode<B: Backend + ?Sized>(
    mut canvas: Canvas,
    config: &DaedalConfig,
    backend: &B,
) -> Result<(Canvas, Vec<StepEvent>, usize)> {
    config.validate()?;
    if !canvas.has_masks() {
        return Err(Error::invalid("stage 2 needs at least one masked cell"));
    }
    let vocab = backend.vocab();
    let mut events = Vec::new();
    let mut expansions = 0;
    while canvas.has_masks() {
        let stats = backend::query(backend, &canvas)?;
        let fills = select_fill_set(&stats, config.tau_high);
        commit_fills(&mut canvas, &stats, &fills, &vocab)?;

        let eos_confidence = compute_eos_confidence(canvas.cells(), &stats, config.w_eos, &vocab)?;
        let length_before = canvas.len();
        let mut expansion_cell_id = None;
        if eos_confidence < config.tau_expand && length_before < config.l_max {
            let filled: HashSet<CellId> = fills.iter().copied().collect();
            if let Some(point) = expansion_point(&stats, &filled, config.tau_low) {
                let block = config.e_factor.min(config.l_max - length_before + 1);
                canvas.replace_with_masks(point, block)?;
                expansion_cell_id = Some(point);
                expansions += 1;
            }
        }
        events.push(StepEvent {
            phase: Phase::Stage2,
            iteration: events.len(),
            eos_confidence: Some(eos_confidence),
            filled_cell_ids: fills,
            expansion_cell_id,
            length_before,
            length_after: canvas.len(),
        });
    }
    Ok((canvas, events, expansions))
}

/// Both stages end to end.
pub fn run_daedal<B: Backend + ?Sized>(
    prompt_id: &str,
    prompt: Vec<TokenId>,
    config: &DaedalConfig,
    backend: &B,
) -> Result<RunRecord> {
    let (canvas, mut trace) = stage1_adjust(prompt, config, backend)?;
    let (canvas, stage2, expansions) = stage2_decode(canvas, config, backend)?;
    trace.extend(stage2);
    let final_tokens = canvas
        .final_tokens()
        .ok_or_else(|| Error::invalid("decode finished with masks left"))?;
    Ok(metrics::assemble_record(
        prompt_id,
        final_tokens,
        trace,
        expansions,
        &backend.vocab(),
    ))
}

//! Straight-line transcription of the two-stage decoder.
//!
//! Deliberately naive and self-contained: it keeps its own slot list
//! instead of using the canvas editing operations, and re-derives every
//! set, window mean and metric inline. Its only purpose is to be compared
//! against [`crate::daedal::run_daedal`].

use crate::backend::Backend;
use crate::canvas::{Canvas, Cell, CellId, CellState};
use crate::config::DaedalConfig;
use crate::error::{Error, Result};
use crate::record::{Phase, RunRecord, StepEvent};
use crate::tokens::TokenId;

#[derive(Clone, Copy)]
struct Slot {
    id: u64,
    token: Option<TokenId>,
}

struct Prediction {
    token: TokenId,
    conf: f64,
    eos: f64,
}

pub fn reference_interpret<B: Backend + ?Sized>(
    prompt_id: &str,
    prompt: Vec<TokenId>,
    config: &DaedalConfig,
    backend: &B,
) -> Result<RunRecord> {
    config.validate()?;
    let vocab = backend.vocab();
    let mask = vocab.mask_id();
    let eos = vocab.eos_id();
    for &t in &prompt {
        if t.0 >= vocab.vocab_size() {
            return Err(Error::InvalidArgument(format!("prompt token {t} out of range")));
        }
    }

    let mut next_id: u64 = 0;
    let mut x: Vec<Slot> = Vec::new();
    for _ in 0..config.l_init {
        x.push(Slot {
            id: next_id,
            token: None,
        });
        next_id += 1;
    }

    // f(x): one prediction per slot, None for committed slots.
    let model = |x: &[Slot]| -> Result<Vec<Option<Prediction>>> {
        let cells = x
            .iter()
            .map(|s| Cell {
                id: CellId(s.id),
                state: match s.token {
                    None => CellState::Masked,
                    Some(t) => CellState::Committed(t),
                },
            })
            .collect();
        let canvas = Canvas::from_parts(prompt.clone(), cells)?;
        if !canvas.has_masks() {
            return Err(Error::InvalidArgument("no masks to predict".into()));
        }
        let response = backend.predict(&canvas)?;
        response.validate(&canvas, &vocab)?;
        let mut out: Vec<Option<Prediction>> = Vec::with_capacity(x.len());
        let mut k = 0;
        for s in x {
            if s.token.is_none() {
                let st = &response.stats[k];
                k += 1;
                out.push(Some(Prediction {
                    token: st.predicted_token,
                    conf: st.confidence,
                    eos: st.eos_prob,
                }));
            } else {
                out.push(None);
            }
        }
        Ok(out)
    };

    let eos_confidence = |x: &[Slot], logits: &[Option<Prediction>]| -> f64 {
        let start = x.len() - config.w_eos;
        let mut total = 0.0;
        for i in start..x.len() {
            total += match x[i].token {
                Some(t) if t == eos => 1.0,
                Some(_) => 0.0,
                None => logits[i].as_ref().expect("masked slot was predicted").eos,
            };
        }
        total / config.w_eos as f64
    };

    let mut trace = Vec::new();

    // Stage 1
    let mut iteration = 0;
    while x.len() < config.l_max {
        let logits = model(&x)?;
        let conf_eos = eos_confidence(&x, &logits);
        let before = x.len();
        if conf_eos < config.tau_eos {
            let mut n = config.stage1_increment();
            if before + n > config.l_max {
                n = config.l_max - before;
            }
            for _ in 0..n {
                x.push(Slot {
                    id: next_id,
                    token: None,
                });
                next_id += 1;
            }
            trace.push(StepEvent {
                phase: Phase::Stage1,
                iteration,
                eos_confidence: Some(conf_eos),
                filled_cell_ids: vec![],
                expansion_cell_id: None,
                length_before: before,
                length_after: x.len(),
            });
            iteration += 1;
        } else {
            trace.push(StepEvent {
                phase: Phase::Stage1,
                iteration,
                eos_confidence: Some(conf_eos),
                filled_cell_ids: vec![],
                expansion_cell_id: None,
                length_before: before,
                length_after: before,
            });
            break;
        }
    }

    // Stage 2
    let mut iteration = 0;
    let mut expansions = 0;
    while x.iter().any(|s| s.token.is_none()) {
        let logits = model(&x)?;
        let conf = |i: usize| logits[i].as_ref().unwrap().conf;

        let masked: Vec<usize> = (0..x.len()).filter(|&i| x[i].token.is_none()).collect();
        let mut fill: Vec<usize> = masked
            .iter()
            .copied()
            .filter(|&i| conf(i) > config.tau_high)
            .collect();
        if fill.is_empty() {
            let mut best = masked[0];
            for &i in &masked[1..] {
                if conf(i) > conf(best) {
                    best = i;
                }
            }
            fill.push(best);
        }
        let candidates: Vec<usize> = masked
            .iter()
            .copied()
            .filter(|&i| conf(i) < config.tau_low && !fill.contains(&i))
            .collect();

        for &j in &fill {
            let predicted = logits[j].as_ref().unwrap().token;
            if predicted == mask {
                return Err(Error::Protocol("model predicted the mask token".into()));
            }
            x[j].token = Some(predicted);
        }
        let filled_ids: Vec<CellId> = fill.iter().map(|&j| CellId(x[j].id)).collect();

        let conf_eos = eos_confidence(&x, &logits);
        let before = x.len();
        let mut expansion = None;
        if conf_eos < config.tau_expand && before < config.l_max && !candidates.is_empty() {
            let mut i_expand = candidates[0];
            for &i in &candidates[1..] {
                if conf(i) < conf(i_expand) {
                    i_expand = i;
                }
            }
            expansion = Some(CellId(x[i_expand].id));
            let block = config.e_factor.min(config.l_max - before + 1);
            let mut inserted = Vec::with_capacity(block);
            for _ in 0..block {
                inserted.push(Slot {
                    id: next_id,
                    token: None,
                });
                next_id += 1;
            }
            let tail = x.split_off(i_expand + 1);
            x.pop();
            x.extend(inserted);
            x.extend(tail);
            expansions += 1;
        }
        trace.push(StepEvent {
            phase: Phase::Stage2,
            iteration,
            eos_confidence: Some(conf_eos),
            filled_cell_ids: filled_ids,
            expansion_cell_id: expansion,
            length_before: before,
            length_after: x.len(),
        });
        iteration += 1;
    }

    let final_tokens: Vec<TokenId> = x.iter().map(|s| s.token.unwrap()).collect();
    let n_token = final_tokens.len();
    let mut e_token = n_token;
    while e_token > 0 && final_tokens[e_token - 1] == eos {
        e_token -= 1;
    }
    Ok(RunRecord {
        prompt_id: prompt_id.to_string(),
        final_tokens,
        n_token,
        e_token,
        e_ratio: e_token as f64 / n_token as f64,
        iterations: trace.len(),
        expansions,
        trace,
    })
}

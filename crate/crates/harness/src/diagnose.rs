//! Terminal EOS confidence after a single prediction on a fully masked
//! response, compared between prompts labelled `sufficient` and
//! `insufficient`.

use std::collections::BTreeMap;

use daedal_core::{Backend, Canvas, TokenId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::prompts::Prompt;

pub const REPORT_FILE: &str = "report.json";
pub const SUFFICIENT: &str = "sufficient";
pub const INSUFFICIENT: &str = "insufficient";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub count: usize,
    /// Mean EOS probability per window position.
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseRow {
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub length: usize,
    pub w_eos: usize,
    /// Response ordinals covered by the window.
    pub positions: Vec<usize>,
    pub groups: BTreeMap<String, GroupMean>,
    /// `sufficient` mean minus `insufficient` mean, per position.
    pub difference: Vec<f64>,
    pub rows: Vec<DiagnoseRow>,
}

impl DiagnoseReport {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// EOS probabilities of the last `w_eos` cells after one prediction on
/// `length` masks.
pub fn terminal_eos(
    prompt: &[TokenId],
    length: usize,
    w_eos: usize,
    backend: &dyn Backend,
) -> daedal_core::Result<Vec<f64>> {
    let vocab = backend.vocab();
    let canvas = Canvas::new(prompt.to_vec(), length, &vocab)?;
    let response = backend.predict(&canvas)?;
    response.validate(&canvas, &vocab)?;
    Ok(response.stats[length - w_eos..]
        .iter()
        .map(|s| s.eos_prob)
        .collect())
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, w: usize) -> GroupMean {
    let mut sum = vec![0.0; w];
    let mut count = 0;
    for r in rows {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
        count += 1;
    }
    GroupMean {
        count,
        mean: sum.into_iter().map(|s| s / count as f64).collect(),
    }
}

/// Runs the diagnostic on the current rayon pool. Prompts in other groups
/// get rows and group means but do not enter the difference.
pub fn diagnose_eos_signal(
    prompts: &[Prompt],
    length: usize,
    w_eos: usize,
    backend: &dyn Backend,
) -> Result<DiagnoseReport> {
    if w_eos == 0 || w_eos > length {
        return Err(HarnessError::Usage(format!(
            "window of {w_eos} does not fit a response of {length}"
        )));
    }
    let rows: Vec<DiagnoseRow> = prompts
        .par_iter()
        .map(|p| {
            let (eos, error) = match terminal_eos(&p.tokens, length, w_eos, backend) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            DiagnoseRow {
                prompt_id: p.id.clone(),
                group: p.group.clone(),
                eos,
                error,
            }
        })
        .collect();

    let mut by_group: BTreeMap<&str, Vec<&Vec<f64>>> = BTreeMap::new();
    for r in &rows {
        if let (Some(g), Some(eos)) = (&r.group, &r.eos) {
            by_group.entry(g).or_default().push(eos);
        }
    }
    let groups: BTreeMap<String, GroupMean> = by_group
        .into_iter()
        .map(|(g, v)| (g.to_string(), mean_rows(v.into_iter(), w_eos)))
        .collect();
    let group = |name: &str| {
        groups
            .get(name)
            .ok_or_else(|| HarnessError::Data(format!("group {name:?} has no diagnosed prompts")))
    };
    let difference = group(SUFFICIENT)?
        .mean
        .iter()
        .zip(&group(INSUFFICIENT)?.mean)
        .map(|(s, i)| s - i)
        .collect();

    Ok(DiagnoseReport {
        length,
        w_eos,
        positions: (length - w_eos..length).collect(),
        groups,
        difference,
        rows,
    })
}

//! Token-economy metrics: effective length, effective ratio, and their
//! aggregation over a benchmark.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{RunRecord, StepEvent};
use crate::tokens::{TokenId, Vocab};

pub const DEFAULT_BIN_WIDTH: usize = 64;

/// Response length once the trailing run of EOS padding is stripped.
/// Interior EOS tokens count.
pub fn effective_tokens(final_tokens: &[TokenId], vocab: &Vocab) -> usize {
    final_tokens
        .iter()
        .rposition(|&t| t != vocab.eos_id())
        .map_or(0, |i| i + 1)
}

pub fn e_ratio(e_token: usize, n_token: usize) -> Result<f64> {
    if n_token == 0 {
        return Err(Error::invalid("n_token must be positive"));
    }
    if e_token > n_token {
        return Err(Error::invalid(format!(
            "e_token ({e_token}) exceeds n_token ({n_token})"
        )));
    }
    Ok(e_token as f64 / n_token as f64)
}

pub(crate) fn assemble_record(
    prompt_id: &str,
    final_tokens: Vec<TokenId>,
    trace: Vec<StepEvent>,
    expansions: usize,
    vocab: &Vocab,
) -> RunRecord {
    let n_token = final_tokens.len();
    let e_token = effective_tokens(&final_tokens, vocab);
    RunRecord {
        prompt_id: prompt_id.to_string(),
        e_ratio: e_ratio(e_token, n_token).expect("canvas is never empty"),
        final_tokens,
        n_token,
        e_token,
        iterations: trace.len(),
        expansions,
        trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower edge.
    pub lo: usize,
    /// Exclusive upper edge.
    pub hi: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_n_token: f64,
    pub mean_e_token: f64,
    /// Mean of per-record ratios.
    pub mean_e_ratio: f64,
    /// Non-empty bins of `n_token`, ascending.
    pub histogram: Vec<HistogramBin>,
}

impl Summary {
    pub fn occupied_bins(&self) -> usize {
        self.histogram.len()
    }
}

pub fn aggregate(records: &[RunRecord]) -> Result<Summary> {
    aggregate_with_bins(records, DEFAULT_BIN_WIDTH)
}

pub fn aggregate_with_bins(records: &[RunRecord], bin_width: usize) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::invalid("cannot aggregate zero records"));
    }
    if bin_width == 0 {
        return Err(Error::invalid("histogram bin width must be positive"));
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *bins.entry(r.n_token / bin_width).or_default() += 1;
    }
    Ok(Summary {
        mean_n_token: mean(&|r| r.n_token as f64),
        mean_e_token: mean(&|r| r.e_token as f64),
        mean_e_ratio: mean(&|r| r.e_ratio),
        histogram: bins
            .into_iter()
            .map(|(b, count)| HistogramBin {
                lo: b * bin_width,
                hi: (b + 1) * bin_width,
                count,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EOS: TokenId = TokenId(0);

    fn vocab() -> Vocab {
        Vocab::new(10, TokenId(9), EOS).unwrap()
    }

    fn t(ids: &[u32]) -> Vec<TokenId> {
        ids.iter().copied().map(TokenId).collect()
    }

    #[test]
    fn effective_tokens_cases() {
        let v = vocab();
        assert_eq!(effective_tokens(&t(&[0, 0, 0]), &v), 0);
        assert_eq!(effective_tokens(&t(&[1, 2, 3]), &v), 3);
        assert_eq!(effective_tokens(&t(&[1, 0, 2, 0, 0]), &v), 3);
        assert_eq!(effective_tokens(&[], &v), 0);
    }

    #[test]
    fn e_ratio_cases() {
        assert!((e_ratio(284, 1024).unwrap() * 100.0 - 27.7).abs() < 0.05);
        assert!((e_ratio(267, 363).unwrap() * 100.0 - 73.5).abs() < 0.06);
        assert_eq!(e_ratio(0, 64).unwrap(), 0.0);
        assert!(e_ratio(1, 0).is_err());
        assert!(e_ratio(5, 4).is_err());
    }

    fn record(n: usize, e: usize) -> RunRecord {
        RunRecord {
            prompt_id: format!("{n}-{e}"),
            final_tokens: vec![],
            n_token: n,
            e_token: e,
            e_ratio: e as f64 / n as f64,
            iterations: 0,
            expansions: 0,
            trace: vec![],
        }
    }

    #[test]
    fn aggregate_single_record_is_identity() {
        let s = aggregate(&[record(100, 40)]).unwrap();
        assert_eq!(s.mean_n_token, 100.0);
        assert_eq!(s.mean_e_token, 40.0);
        assert_eq!(s.mean_e_ratio, 0.4);
        assert_eq!(
            s.histogram,
            vec![HistogramBin {
                lo: 64,
                hi: 128,
                count: 1
            }]
        );
    }

    #[test]
    fn aggregate_means_and_bins() {
        let s = aggregate(&[record(100, 100), record(300, 30)]).unwrap();
        assert_eq!(s.mean_n_token, 200.0);
        // mean of ratios (1.0 + 0.1) / 2, not 130 / 400
        assert!((s.mean_e_ratio - 0.55).abs() < 1e-12);
        assert_eq!(s.occupied_bins(), 2);
        assert!(aggregate(&[]).is_err());
        assert!(aggregate_with_bins(&[record(1, 1)], 0).is_err());
    }

    #[test]
    fn fixed_length_records_share_one_bin() {
        let recs: Vec<_> = (0..20).map(|e| record(512, e * 10)).collect();
        assert_eq!(aggregate(&recs).unwrap().occupied_bins(), 1);
    }

    #[test]
    fn summary_json_shape() {
        let json = serde_json::to_value(aggregate(&[record(64, 32)]).unwrap()).unwrap();
        for key in ["mean_n_token", "mean_e_token", "mean_e_ratio", "histogram"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(
            json["histogram"][0],
            serde_json::json!({"lo": 64, "hi": 128, "count": 1})
        );
    }

    proptest! {
        #[test]
        fn trailing_eos_is_ignored(body in prop::collection::vec(0u32..9, 0..40), pad in 0usize..20) {
            let v = vocab();
            let base = t(&body);
            let mut padded = base.clone();
            padded.extend(std::iter::repeat_n(EOS, pad));
            let e = effective_tokens(&base, &v);
            prop_assert_eq!(effective_tokens(&padded, &v), e);
            if !padded.is_empty() {
                let r = e_ratio(e, padded.len()).unwrap();
                prop_assert!((0.0..=1.0).contains(&r));
                let ends_in_eos = padded.last() == Some(&EOS);
                prop_assert_eq!(r == 1.0, !ends_in_eos);
            }
        }
    }
}

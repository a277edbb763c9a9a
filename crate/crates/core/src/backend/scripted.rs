//! A deterministic synthetic model.
//!
//! The scenario knows the response it wants to produce (`target`) and the
//! response length at which that answer fits (`sufficiency_threshold`).
//! Cell `k` of a length-`L` response predicts `target[k]`, or EOS past the
//! end of the target. Past the target, EOS is certain (probability 1) once
//! `L` reaches the threshold and improbable (`low_eos`) before it, which
//! reproduces the terminal-EOS signal a real model gives for sufficient and
//! insufficient lengths.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendResponse, PositionStats};
use crate::canvas::Canvas;
use crate::error::{Error, Result};
use crate::tokens::{TokenId, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedScenario {
    pub target: Vec<TokenId>,
    #[serde(default)]
    pub noise_seed: u64,
    /// Confidence for target cells by response ordinal; missing entries are 1.0.
    #[serde(default)]
    pub confidence_profile: BTreeMap<usize, f64>,
    pub sufficiency_threshold: usize,
    /// EOS probability reported where EOS is not (yet) warranted.
    #[serde(default)]
    pub low_eos: f64,
    /// Amplitude of the seeded confidence jitter on target cells.
    #[serde(default)]
    pub confidence_noise: f64,
}

impl ScriptedScenario {
    pub fn new(target: Vec<TokenId>, sufficiency_threshold: usize) -> Self {
        ScriptedScenario {
            target,
            noise_seed: 0,
            confidence_profile: BTreeMap::new(),
            sufficiency_threshold,
            low_eos: 0.0,
            confidence_noise: 0.0,
        }
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        for (k, &t) in self.target.iter().enumerate() {
            if t == vocab.mask_id() || !vocab.contains(t) {
                return Err(Error::invalid(format!(
                    "target[{k}] = {t} is not a valid output token"
                )));
            }
        }
        let probs = self
            .confidence_profile
            .values()
            .chain([&self.low_eos, &self.confidence_noise]);
        for &p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("scenario probability {p} outside [0, 1]")));
            }
        }
        if self.sufficiency_threshold == 0 {
            return Err(Error::invalid("sufficiency_threshold must be positive"));
        }
        Ok(())
    }

    /// Token the scenario predicts at response ordinal `ordinal`.
    pub fn token_at(&self, ordinal: usize, vocab: &Vocab) -> TokenId {
        self.target.get(ordinal).copied().unwrap_or(vocab.eos_id())
    }

    /// Full statistics for one position.
    pub fn stats_at(&self, ordinal: usize, length: usize, vocab: &Vocab) -> (TokenId, f64, f64) {
        let token = self.token_at(ordinal, vocab);
        if ordinal < self.target.len() {
            let confidence = self.target_confidence(ordinal);
            let eos = if token == vocab.eos_id() {
                confidence
            } else {
                self.low_eos
            };
            (token, confidence, eos)
        } else if length >= self.sufficiency_threshold {
            (token, 1.0, 1.0)
        } else {
            (token, self.low_eos, self.low_eos)
        }
    }

    fn target_confidence(&self, ordinal: usize) -> f64 {
        let base = self.confidence_profile.get(&ordinal).copied().unwrap_or(1.0);
        if self.confidence_noise == 0.0 {
            return base;
        }
        let u = unit_hash(self.noise_seed, ordinal as u64);
        (base - self.confidence_noise * u).clamp(0.0, 1.0)
    }

    pub fn predict(&self, canvas: &Canvas, vocab: &Vocab) -> Result<BackendResponse> {
        if !canvas.has_masks() {
            return Err(Error::invalid("predict called on a canvas without masks"));
        }
        let length = canvas.len();
        let stats = canvas
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_masked())
            .map(|(k, c)| {
                let (predicted_token, confidence, eos_prob) = self.stats_at(k, length, vocab);
                PositionStats {
                    cell_id: c.id,
                    predicted_token,
                    confidence,
                    eos_prob,
                }
            })
            .collect();
        Ok(BackendResponse { stats })
    }
}

/// splitmix64 finaliser mapped to [0, 1).
fn unit_hash(seed: u64, k: u64) -> f64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// One scenario served for every prompt.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    scenario: ScriptedScenario,
    vocab: Vocab,
}

impl ScriptedBackend {
    pub fn new(scenario: ScriptedScenario, vocab: Vocab) -> Result<Self> {
        scenario.validate(&vocab)?;
        Ok(ScriptedBackend { scenario, vocab })
    }

    pub fn scenario(&self) -> &ScriptedScenario {
        &self.scenario
    }
}

impl Backend for ScriptedBackend {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        self.scenario.predict(canvas, &self.vocab)
    }

    fn descriptor(&self) -> String {
        format!(
            "scripted(target_len={}, threshold={}, seed={})",
            self.scenario.target.len(),
            self.scenario.sufficiency_threshold,
            self.scenario.noise_seed
        )
    }
}

/// A benchmark's worth of scenarios, selected by the canvas prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedSuite {
    pub vocab: Vocab,
    pub entries: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: String,
    pub prompt: Vec<TokenId>,
    /// Free-form grouping label, used by the EOS-signal diagnostic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub scenario: ScriptedScenario,
}

impl ScriptedSuite {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for e in &self.entries {
            e.scenario.validate(&self.vocab)?;
            if let Some(prev) = seen.insert(&e.prompt, &e.id) {
                return Err(Error::invalid(format!(
                    "suite entries {prev} and {} share a prompt",
                    e.id
                )));
            }
        }
        Ok(())
    }

    pub fn into_backend(self) -> Result<SuiteBackend> {
        self.validate()?;
        let index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.prompt.clone(), i))
            .collect();
        Ok(SuiteBackend { suite: self, index })
    }
}

/// Serves each prompt's own scenario.
#[derive(Debug, Clone)]
pub struct SuiteBackend {
    suite: ScriptedSuite,
    index: HashMap<Vec<TokenId>, usize>,
}

impl SuiteBackend {
    pub fn suite(&self) -> &ScriptedSuite {
        &self.suite
    }

    pub fn scenario_for(&self, prompt: &[TokenId]) -> Option<&ScriptedScenario> {
        self.index.get(prompt).map(|&i| &self.suite.entries[i].scenario)
    }
}

impl Backend for SuiteBackend {
    fn vocab(&self) -> Vocab {
        self.suite.vocab
    }

    fn predict(&self, canvas: &Canvas) -> Result<BackendResponse> {
        let scenario = self
            .scenario_for(canvas.prompt())
            .ok_or_else(|| Error::invalid("no scripted scenario for this prompt"))?;
        scenario.predict(canvas, &self.suite.vocab)
    }

    fn descriptor(&self) -> String {
        format!("scripted-suite({} scenarios)", self.suite.entries.len())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the two-stage dynamic-length decoder.
///
/// Thresholds are compared with strict inequalities: a cell fills when its
/// confidence is `> tau_high`, is an expansion candidate when `< tau_low`,
/// and the EOS signal triggers growth when `< tau_eos` (stage 1) or
/// `< tau_expand` (stage 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaedalConfig {
    pub l_init: usize,
    pub l_max: usize,
    pub tau_eos: f64,
    pub tau_high: f64,
    pub tau_low: f64,
    pub tau_expand: f64,
    /// Number of masks a stage-2 expansion point is replaced with.
    pub e_factor: usize,
    /// Width of the terminal window the EOS confidence is averaged over.
    pub w_eos: usize,
    /// Masks appended per stage-1 pass; `None` follows `e_factor`.
    pub stage1_increment: Option<usize>,
    /// Denoising steps for the fixed-length baseline. `None` means one
    /// step per token of the preset length.
    pub baseline_steps: Option<usize>,
}

impl Default for DaedalConfig {
    fn default() -> Self {
        DaedalConfig {
            l_init: 64,
            l_max: 2048,
            tau_eos: 0.9,
            tau_high: 0.9,
            tau_low: 0.1,
            tau_expand: 0.9,
            e_factor: 8,
            w_eos: 32,
            stage1_increment: None,
            baseline_steps: None,
        }
    }
}

impl DaedalConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.l_init == 0 {
            return fail("l_init must be positive".into());
        }
        if self.l_init > self.l_max {
            return fail(format!(
                "l_init ({}) must not exceed l_max ({})",
                self.l_init, self.l_max
            ));
        }
        for (name, p) in [
            ("tau_eos", self.tau_eos),
            ("tau_high", self.tau_high),
            ("tau_low", self.tau_low),
            ("tau_expand", self.tau_expand),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.tau_low > self.tau_high {
            return fail(format!(
                "tau_low ({}) must not exceed tau_high ({})",
                self.tau_low, self.tau_high
            ));
        }
        if self.e_factor < 2 {
            return fail(format!("e_factor must be at least 2, got {}", self.e_factor));
        }
        if self.w_eos == 0 || self.w_eos > self.l_init {
            return fail(format!(
                "w_eos must lie in [1, l_init={}], got {}",
                self.l_init, self.w_eos
            ));
        }
        if self.stage1_increment == Some(0) {
            return fail("stage1_increment must be positive".into());
        }
        if self.baseline_steps == Some(0) {
            return fail("baseline_steps must be positive".into());
        }
        Ok(())
    }

    pub fn stage1_increment(&self) -> usize {
        self.stage1_increment.unwrap_or(self.e_factor)
    }

    /// Upper bound on backend calls for one two-stage run.
    pub fn backend_call_bound(&self) -> usize {
        let growth = self.l_max - self.l_init;
        self.l_max + growth.div_ceil(self.stage1_increment()) + 1
    }
}

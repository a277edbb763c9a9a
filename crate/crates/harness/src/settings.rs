//! Command-line flags, the optional config file that mirrors them, and the
//! resolved settings a run works from.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use daedal_core::DaedalConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_LENGTHS: [usize; 6] = [64, 128, 256, 512, 1024, 2048];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Two-stage length-adapting decoding.
    Daedal,
    /// Fixed-length decoding at --l-init.
    Baseline,
    /// Fixed-length decoding at every length in --lengths.
    Sweep,
    /// Terminal EOS confidence of sufficient vs insufficient groups.
    Diagnose,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Daedal => "daedal",
            Mode::Baseline => "baseline",
            Mode::Sweep => "sweep",
            Mode::Diagnose => "diagnose",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// Path to a scripted suite (JSON).
    Scripted(PathBuf),
    /// Base URL of a model server.
    Remote(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => Ok(BackendSpec::Scripted(PathBuf::from(path))),
            Some(("remote", url)) if !url.is_empty() => Ok(BackendSpec::Remote(url.to_string())),
            _ => Err(format!("backend must be scripted:PATH or remote:URL, got {s:?}")),
        }
    }
}

/// Flags as parsed, and also the config file schema: every flag has a
/// snake_case key of the same name.
#[derive(Debug, Clone, Default, Parser, Deserialize)]
#[command(
    name = "daedal",
    version,
    about = "Run and benchmark dynamic-length diffusion decoding"
)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Prompt file (JSONL). Optional with a scripted backend, which then
    /// runs every suite entry.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// scripted:PATH or remote:URL
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub l_init: Option<usize>,
    #[arg(long)]
    pub l_max: Option<usize>,
    #[arg(long)]
    pub tau_eos: Option<f64>,
    #[arg(long)]
    pub tau_high: Option<f64>,
    #[arg(long)]
    pub tau_low: Option<f64>,
    #[arg(long)]
    pub tau_expand: Option<f64>,
    #[arg(long)]
    pub e_factor: Option<usize>,
    #[arg(long)]
    pub w_eos: Option<usize>,
    #[arg(long)]
    pub stage1_increment: Option<usize>,
    #[arg(long)]
    pub baseline_steps: Option<usize>,
    /// Comma-separated lengths for sweep mode.
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Skip prompts that already have a record in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Overrides the noise seed of scripted scenarios.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file (TOML, or JSON when the name ends in .json).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Args {
    /// Fills every unset field from `file`.
    fn or(self, file: Args) -> Args {
        Args {
            mode: self.mode.or(file.mode),
            prompts: self.prompts.or(file.prompts),
            out: self.out.or(file.out),
            backend: self.backend.or(file.backend),
            l_init: self.l_init.or(file.l_init),
            l_max: self.l_max.or(file.l_max),
            tau_eos: self.tau_eos.or(file.tau_eos),
            tau_high: self.tau_high.or(file.tau_high),
            tau_low: self.tau_low.or(file.tau_low),
            tau_expand: self.tau_expand.or(file.tau_expand),
            e_factor: self.e_factor.or(file.e_factor),
            w_eos: self.w_eos.or(file.w_eos),
            stage1_increment: self.stage1_increment.or(file.stage1_increment),
            baseline_steps: self.baseline_steps.or(file.baseline_steps),
            lengths: self.lengths.or(file.lengths),
            concurrency: self.concurrency.or(file.concurrency),
            resume: self.resume || file.resume,
            seed: self.seed.or(file.seed),
            config: self.config,
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<Args> {
    let text =
        std::fs::read_to_string(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| HarnessError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub mode: Mode,
    pub prompts: Option<PathBuf>,
    pub out: PathBuf,
    pub backend: BackendSpec,
    pub config: DaedalConfig,
    pub lengths: Vec<usize>,
    pub concurrency: usize,
    pub resume: bool,
    pub seed: Option<u64>,
}

impl Settings {
    pub fn resolve(args: Args) -> Result<Settings> {
        let args = match &args.config {
            Some(path) => {
                let file = load_config_file(path)?;
                args.or(file)
            }
            None => args,
        };
        let usage = |m: &str| HarnessError::Usage(m.to_string());

        let out = args.out.ok_or_else(|| usage("--out is required"))?;
        let backend = args
            .backend
            .ok_or_else(|| usage("--backend is required"))?
            .parse::<BackendSpec>()
            .map_err(HarnessError::Usage)?;
        let mode = args.mode.unwrap_or(Mode::Daedal);
        if args.prompts.is_none() && matches!(backend, BackendSpec::Remote(_)) {
            return Err(usage("--prompts is required with a remote backend"));
        }

        let mut config = DaedalConfig::default();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = args.$f { config.$f = v; } )* };
        }
        set!(l_init, l_max, tau_eos, tau_high, tau_low, tau_expand, e_factor, w_eos);
        config.stage1_increment = args.stage1_increment.or(config.stage1_increment);
        config.baseline_steps = args.baseline_steps.or(config.baseline_steps);
        if mode != Mode::Sweep {
            config
                .validate()
                .map_err(|e| HarnessError::Usage(e.to_string()))?;
        }
        if config.baseline_steps == Some(0) {
            return Err(usage("--baseline-steps must be positive"));
        }

        let lengths = args.lengths.unwrap_or_else(|| DEFAULT_LENGTHS.to_vec());
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(usage("--lengths must list positive lengths"));
        }
        let concurrency = match args.concurrency {
            Some(0) => return Err(usage("--concurrency must be positive")),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };

        Ok(Settings {
            mode,
            prompts: args.prompts,
            out,
            backend,
            config,
            lengths,
            concurrency,
            resume: args.resume,
            seed: args.seed,
        })
    }
}

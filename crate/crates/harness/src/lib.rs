//! Benchmark harness for the dynamic-length decoder: prompt ingestion,
//! config loading, parallel runs, baseline length sweeps and the terminal
//! EOS diagnostic.

pub mod batch;
pub mod diagnose;
pub mod error;
pub mod prompts;
pub mod settings;

use std::ffi::OsString;
use std::fs;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::Parser;
use daedal_core::backend::{RemoteBackend, Retrying, ScriptedSuite};
use daedal_core::Backend;
use serde::Serialize;

use crate::batch::{Batch, Decoder, SummaryFile};
use crate::diagnose::{diagnose_eos_signal, REPORT_FILE};
use crate::error::{exit, HarnessError, Result};
use crate::prompts::{load_prompts, suite_prompts, IdentityTokenizer, Prompt, RemoteTokenizer};
use crate::settings::{Args, BackendSpec, Mode, Settings};

pub const SWEEP_FILE: &str = "sweep.json";
const REMOTE_TIMEOUT: Duration = Duration::from_secs(120);
const REMOTE_ATTEMPTS: usize = 3;

/// Reads a scripted suite, replacing each scenario's noise seed with
/// `seed + index` when a seed is given.
pub fn load_suite(path: &std::path::Path, seed: Option<u64>) -> Result<ScriptedSuite> {
    let text =
        fs::read_to_string(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
    let mut suite: ScriptedSuite =
        serde_json::from_str(&text).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        for (i, e) in suite.entries.iter_mut().enumerate() {
            e.scenario.noise_seed = seed.wrapping_add(i as u64);
        }
    }
    suite
        .validate()
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    Ok(suite)
}

fn load(settings: &Settings) -> Result<(Box<dyn Backend>, Vec<Prompt>)> {
    match &settings.backend {
        BackendSpec::Scripted(path) => {
            let suite = load_suite(path, settings.seed)?;
            let prompts = match &settings.prompts {
                Some(p) => load_prompts(p, &IdentityTokenizer)?,
                None if suite.entries.is_empty() => {
                    return Err(HarnessError::Input(format!(
                        "{}: suite has no entries",
                        path.display()
                    )))
                }
                None => suite_prompts(&suite),
            };
            let backend = suite
                .into_backend()
                .map_err(|e| HarnessError::Data(e.to_string()))?;
            Ok((Box::new(backend), prompts))
        }
        BackendSpec::Remote(url) => {
            let path = settings
                .prompts
                .as_ref()
                .expect("resolved settings require prompts");
            let remote = RemoteBackend::connect(url, REMOTE_TIMEOUT)
                .map_err(|e| HarnessError::Unavailable(format!("{url}: {e}")))?;
            let prompts = load_prompts(path, &RemoteTokenizer::new(url, REMOTE_TIMEOUT))?;
            let backend = Retrying::new(remote, REMOTE_ATTEMPTS, Duration::from_millis(500));
            Ok((Box::new(backend), prompts))
        }
    }
}

fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).expect("report serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| HarnessError::output(path, e))
}

/// What a completed invocation produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// One summary for daedal and baseline modes, one per length for sweeps.
    Runs(Vec<SummaryFile>),
    Diagnose(diagnose::DiagnoseReport),
}

impl Outcome {
    pub fn failed(&self) -> usize {
        match self {
            Outcome::Runs(s) => s.iter().map(|s| s.failed).sum(),
            Outcome::Diagnose(r) => r.failed(),
        }
    }
}

pub fn run(settings: &Settings) -> Result<Outcome> {
    let (backend, prompts) = load(settings)?;
    fs::create_dir_all(&settings.out).map_err(|e| HarnessError::output(&settings.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.concurrency)
        .build()
        .map_err(|e| HarnessError::Usage(format!("cannot start {} workers: {e}", settings.concurrency)))?;

    let batch = |dir, decoder| Batch {
        dir,
        mode: settings.mode,
        decoder,
        config: &settings.config,
        backend: &*backend,
        resume: settings.resume,
    };
    let config = &settings.config;
    pool.install(|| match settings.mode {
        Mode::Daedal => Ok(Outcome::Runs(vec![
            batch(settings.out.clone(), Decoder::Daedal).run(&prompts)?
        ])),
        Mode::Baseline => {
            let length = config.l_init;
            let steps = config.baseline_steps.unwrap_or(length);
            let b = batch(settings.out.clone(), Decoder::Baseline { length, steps });
            Ok(Outcome::Runs(vec![b.run(&prompts)?]))
        }
        Mode::Sweep => {
            let mut summaries = Vec::new();
            for &length in &settings.lengths {
                let steps = config.baseline_steps.unwrap_or(length);
                let dir = settings.out.join(format!("len_{length}"));
                summaries.push(batch(dir, Decoder::Baseline { length, steps }).run(&prompts)?);
            }
            write_json(&settings.out.join(SWEEP_FILE), &summaries)?;
            Ok(Outcome::Runs(summaries))
        }
        Mode::Diagnose => {
            let report = diagnose_eos_signal(&prompts, config.l_init, config.w_eos, &*backend)?;
            write_json(&settings.out.join(REPORT_FILE), &report)?;
            Ok(Outcome::Diagnose(report))
        }
    })
}

fn report(outcome: &Outcome) {
    match outcome {
        Outcome::Runs(summaries) => {
            for s in summaries {
                let label = match s.length {
                    Some(l) => format!("{} length={l} steps={}", s.mode, s.steps.unwrap_or(l)),
                    None => s.mode.to_string(),
                };
                let stats = match &s.summary {
                    Some(m) => format!(
                        " mean_n_token={:.1} mean_e_token={:.1} mean_e_ratio={:.4} bins={}",
                        m.mean_n_token,
                        m.mean_e_token,
                        m.mean_e_ratio,
                        m.occupied_bins()
                    ),
                    None => String::new(),
                };
                println!("{label}: {}/{} completed{stats}", s.completed, s.prompts);
            }
        }
        Outcome::Diagnose(r) => {
            let min = r.difference.iter().copied().fold(f64::INFINITY, f64::min);
            let max = r.difference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "diagnose length={} w_eos={}: {} prompts, difference in [{min:.4}, {max:.4}]",
                r.length,
                r.w_eos,
                r.rows.len()
            );
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::USAGE,
            };
        }
    };
    let result = Settings::resolve(args).and_then(|s| run(&s));
    match result {
        Ok(outcome) => {
            report(&outcome);
            let failed = outcome.failed();
            if failed > 0 {
                eprintln!("{failed} prompt(s) failed; see the error fields in the output");
                exit::PARTIAL
            } else {
                exit::OK
            }
        }
        Err(e) => {
            eprintln!("daedal: {e}");
            e.exit_code()
        }
    }
}

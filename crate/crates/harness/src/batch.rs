//! Runs one decoder over a prompt set and persists records, traces and the
//! aggregate summary in a directory.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use daedal_core::daedal::run_daedal;
use daedal_core::decode::baseline_decode;
use daedal_core::metrics::{aggregate, Summary};
use daedal_core::trace::{write_trace, TraceFile, TRACE_EXTENSION};
use daedal_core::{Backend, DaedalConfig, RunRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::prompts::Prompt;
use crate::settings::Mode;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACES_DIR: &str = "traces";

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordLine {
    Done(RunRecord),
    Failed(FailedRun),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedRun {
    pub prompt_id: String,
    pub error: String,
}

impl RecordLine {
    pub fn prompt_id(&self) -> &str {
        match self {
            RecordLine::Done(r) => &r.prompt_id,
            RecordLine::Failed(f) => &f.prompt_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Daedal,
    Baseline { length: usize, steps: usize },
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub mode: Mode,
    /// Fixed response length, for baseline runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    /// Denoising steps, for baseline runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub prompts: usize,
    pub completed: usize,
    pub failed: usize,
    pub config: DaedalConfig,
    /// Absent when no prompt completed.
    pub summary: Option<Summary>,
}

pub struct Batch<'a> {
    pub dir: PathBuf,
    pub mode: Mode,
    pub decoder: Decoder,
    pub config: &'a DaedalConfig,
    pub backend: &'a dyn Backend,
    pub resume: bool,
}

/// Trace file name for a prompt id, with path-hostile characters replaced.
pub fn trace_file_name(prompt_id: &str) -> String {
    let safe: String = prompt_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.{TRACE_EXTENSION}")
}

/// Completed records already on disk. Unparseable lines (a run cut off
/// mid-write) and failed runs are ignored, so they are retried.
pub fn read_done(path: &Path) -> Result<HashMap<String, RunRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(HarnessError::output(path, e)),
    };
    let mut done = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| HarnessError::output(path, e))?;
        if let Ok(RecordLine::Done(r)) = serde_json::from_str(&line) {
            done.insert(r.prompt_id.clone(), r);
        }
    }
    Ok(done)
}

pub fn read_records(path: &Path) -> Result<Vec<RecordLine>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::output(path, e))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| HarnessError::output(path, e)))
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| HarnessError::output(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::output(path, e))
}

fn json_line(line: &RecordLine) -> String {
    let mut s = serde_json::to_string(line).expect("record serializes");
    s.push('\n');
    s
}

impl Batch<'_> {
    /// Config stored in trace headers: for baseline runs it carries the
    /// fixed length and step count actually used.
    fn trace_config(&self) -> DaedalConfig {
        match self.decoder {
            Decoder::Daedal => self.config.clone(),
            Decoder::Baseline { length, steps } => DaedalConfig {
                l_init: length,
                l_max: self.config.l_max.max(length),
                baseline_steps: Some(steps),
                ..self.config.clone()
            },
        }
    }

    fn decode(&self, p: &Prompt) -> daedal_core::Result<RunRecord> {
        match self.decoder {
            Decoder::Daedal => run_daedal(&p.id, p.tokens.clone(), self.config, self.backend),
            Decoder::Baseline { length, steps } => {
                baseline_decode(&p.id, p.tokens.clone(), length, steps, self.backend)
            }
        }
    }

    /// Runs every prompt without a completed record (all of them unless
    /// resuming) on the current rayon pool. Records are appended as runs
    /// finish, then rewritten in prompt order.
    pub fn run(&self, prompts: &[Prompt]) -> Result<SummaryFile> {
        let traces = self.dir.join(TRACES_DIR);
        fs::create_dir_all(&traces).map_err(|e| HarnessError::output(&traces, e))?;
        let records_path = self.dir.join(RECORDS_FILE);
        let mut done = if self.resume {
            read_done(&records_path)?
        } else {
            HashMap::new()
        };

        let sink = OpenOptions::new()
            .create(true)
            .append(self.resume)
            .write(true)
            .truncate(!self.resume)
            .open(&records_path)
            .map_err(|e| HarnessError::output(&records_path, e))?;
        let sink = Mutex::new(sink);
        let trace_config = self.trace_config();
        let descriptor = self.backend.descriptor();

        let fresh: Vec<RecordLine> = prompts
            .par_iter()
            .filter(|p| !done.contains_key(&p.id))
            .map(|p| {
                let line = match self.decode(p) {
                    Ok(record) => {
                        let trace = TraceFile::from_run(&record, &trace_config, &descriptor);
                        let path = traces.join(trace_file_name(&p.id));
                        write_trace(&path, &trace).map_err(|e| HarnessError::output(&path, e))?;
                        RecordLine::Done(record)
                    }
                    Err(e) => RecordLine::Failed(FailedRun {
                        prompt_id: p.id.clone(),
                        error: e.to_string(),
                    }),
                };
                let mut f = sink.lock().expect("record sink poisoned");
                f.write_all(json_line(&line).as_bytes())
                    .map_err(|e| HarnessError::output(&records_path, e))?;
                Ok(line)
            })
            .collect::<Result<_>>()?;
        drop(sink);

        let mut fresh: HashMap<String, RecordLine> = fresh
            .into_iter()
            .map(|l| (l.prompt_id().to_string(), l))
            .collect();
        let lines: Vec<RecordLine> = prompts
            .iter()
            .map(|p| match done.remove(&p.id) {
                Some(r) => RecordLine::Done(r),
                None => fresh.remove(&p.id).expect("every prompt ran"),
            })
            .collect();
        let text: String = lines.iter().map(json_line).collect();
        write_atomic(&records_path, text.as_bytes())?;

        let completed: Vec<RunRecord> = lines
            .into_iter()
            .filter_map(|l| match l {
                RecordLine::Done(r) => Some(r),
                RecordLine::Failed(_) => None,
            })
            .collect();
        let (length, steps) = match self.decoder {
            Decoder::Daedal => (None, None),
            Decoder::Baseline { length, steps } => (Some(length), Some(steps)),
        };
        let summary = SummaryFile {
            mode: self.mode,
            length,
            steps,
            prompts: prompts.len(),
            completed: completed.len(),
            failed: prompts.len() - completed.len(),
            config: self.config.clone(),
            summary: if completed.is_empty() {
                None
            } else {
                Some(aggregate(&completed).expect("non-empty records aggregate"))
            },
        };
        let path = self.dir.join(SUMMARY_FILE);
        let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        json.push('\n');
        write_atomic(&path, json.as_bytes())?;
        Ok(summary)
    }
}

//! Line-delimited JSON run traces (`.trace.jsonl`).
//!
//! Layout: one `{"header": ...}` line, one `{"event": ...}` line per backend
//! call, one `{"footer": ...}` line. The wall-clock timestamp lives only in
//! the header, so everything after it (the body) is a pure function of
//! scenario and config.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::ScriptedScenario;
use crate::canvas::Canvas;
use crate::config::DaedalConfig;
use crate::error::{Error, Result};
use crate::record::{Phase, RunRecord, StepEvent};
use crate::tokens::{TokenId, Vocab};

pub const TRACE_EXTENSION: &str = "trace.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub prompt_id: String,
    pub config: DaedalConfig,
    pub backend_descriptor: String,
    pub engine_version: String,
    /// Seconds since the Unix epoch at trace creation.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub run_record_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub events: Vec<StepEvent>,
    pub footer: TraceFooter,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Event(StepEvent),
    Footer(TraceFooter),
}

/// SHA-256 over the final tokens and the config that produced them.
pub fn record_digest(final_tokens: &[TokenId], config: &DaedalConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(final_tokens).expect("tokens serialize"));
    h.update(b"\n");
    h.update(serde_json::to_vec(config).expect("config serializes"));
    hex::encode(h.finalize())
}

impl TraceFile {
    pub fn from_run(record: &RunRecord, config: &DaedalConfig, backend_descriptor: &str) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        TraceFile {
            header: TraceHeader {
                prompt_id: record.prompt_id.clone(),
                config: config.clone(),
                backend_descriptor: backend_descriptor.to_string(),
                engine_version: crate::ENGINE_VERSION.to_string(),
                created_at,
            },
            events: record.trace.clone(),
            footer: TraceFooter {
                run_record_digest: record_digest(&record.final_tokens, config),
            },
        }
    }

    /// Everything after the header line, exactly as written to disk.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            write_line(&mut out, &Line::Event(e.clone())).expect("writing to memory");
        }
        write_line(&mut out, &Line::Footer(self.footer.clone())).expect("writing to memory");
        out
    }

    pub fn body_digest(&self) -> String {
        hex::encode(Sha256::digest(self.body_bytes()))
    }

    pub fn verify_digest(&self, final_tokens: &[TokenId]) -> bool {
        record_digest(final_tokens, &self.header.config) == self.footer.run_record_digest
    }

    fn check_order(&self) -> Result<()> {
        for (i, pair) in self.events.windows(2).enumerate() {
            let a = (pair[0].phase, pair[0].iteration);
            let b = (pair[1].phase, pair[1].iteration);
            if a >= b {
                return Err(Error::Parse {
                    line: i + 3,
                    message: format!("event {b:?} does not follow {a:?}"),
                });
            }
        }
        Ok(())
    }
}

fn write_line<W: Write>(w: &mut W, line: &Line) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, line)?;
    w.write_all(b"\n")
}

pub fn write_trace(path: &Path, trace: &TraceFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_line(&mut w, &Line::Header(trace.header.clone()))?;
    w.write_all(&trace.body_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut events = Vec::new();
    let mut footer = None;
    let mut last_good = 0;
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if footer.is_some() {
            return Err(Error::Parse {
                line: n,
                message: "content after footer".into(),
            });
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n,
            message: format!("{e} (last good line {last_good})"),
        })?;
        match (parsed, header.is_some()) {
            (Line::Header(h), false) => header = Some(h),
            (Line::Header(_), true) => {
                return Err(Error::Parse {
                    line: n,
                    message: "duplicate header".into(),
                })
            }
            (_, false) => {
                return Err(Error::Parse {
                    line: n,
                    message: "expected header first".into(),
                })
            }
            (Line::Event(e), true) => events.push(e),
            (Line::Footer(f), true) => footer = Some(f),
        }
        last_good = n;
    }
    let header = header.ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty trace".into(),
    })?;
    let footer = footer.ok_or_else(|| Error::Parse {
        line: last_good + 1,
        message: format!("missing footer (truncated after line {last_good})"),
    })?;
    let trace = TraceFile {
        header,
        events,
        footer,
    };
    trace.check_order()?;
    Ok(trace)
}

/// Rebuilds the final response from a trace and the scripted scenario that
/// produced it, without querying any backend.
pub fn replay(
    trace: &TraceFile,
    prompt: Vec<TokenId>,
    scenario: &ScriptedScenario,
    vocab: &Vocab,
) -> Result<Vec<TokenId>> {
    let start = trace
        .events
        .first()
        .map_or(trace.header.config.l_init, |e| e.length_before);
    let mut canvas = Canvas::new(prompt, start, vocab)?;
    for e in &trace.events {
        if canvas.len() != e.length_before {
            return Err(Error::invalid(format!(
                "{:?} step {} starts at length {} but replay is at {}",
                e.phase,
                e.iteration,
                e.length_before,
                canvas.len()
            )));
        }
        match e.phase {
            Phase::Stage1 => {
                if e.length_after > e.length_before {
                    canvas.append_masks(e.length_after - e.length_before)?;
                }
            }
            Phase::Stage2 | Phase::Baseline => {
                for &id in &e.filled_cell_ids {
                    let ordinal = canvas
                        .position(id)
                        .ok_or_else(|| Error::invalid(format!("trace fills unknown cell {id}")))?;
                    canvas.commit(id, scenario.token_at(ordinal, vocab), vocab)?;
                }
                if let Some(id) = e.expansion_cell_id {
                    canvas.replace_with_masks(id, e.length_after - e.length_before + 1)?;
                }
            }
        }
    }
    canvas
        .final_tokens()
        .ok_or_else(|| Error::invalid("trace ends with masks left"))
}

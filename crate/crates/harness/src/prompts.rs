//! Prompt files: one JSON object per line, carrying either token ids or
//! text for a tokenizer.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use daedal_core::backend::ScriptedSuite;
use daedal_core::TokenId;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// Turns prompt text into token ids.
pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, String>;
}

/// Reads text as whitespace-separated integer ids.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTokenizer;

impl Tokenizer for IdentityTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, String> {
        text.split_whitespace()
            .map(|w| {
                w.parse()
                    .map(TokenId)
                    .map_err(|_| format!("{w:?} is not a token id"))
            })
            .collect()
    }
}

/// Uses a model server's `/v1/tokenize` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteTokenizer {
    agent: ureq::Agent,
    url: String,
}

pub const TOKENIZE_PATH: &str = "/v1/tokenize";

impl RemoteTokenizer {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        RemoteTokenizer {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            url: format!("{}{TOKENIZE_PATH}", base_url.trim_end_matches('/')),
        }
    }
}

#[derive(Deserialize)]
struct TokenizeBody {
    tokens: Vec<TokenId>,
}

impl Tokenizer for RemoteTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, String> {
        let body: TokenizeBody = self
            .agent
            .post(&self.url)
            .send_json(serde_json::json!({ "text": text }))
            .map_err(|e| format!("tokenize request failed: {e}"))?
            .into_json()
            .map_err(|e| format!("malformed tokenize response: {e}"))?;
        Ok(body.tokens)
    }
}

#[derive(Deserialize)]
struct PromptLine {
    id: String,
    #[serde(default)]
    tokens: Option<Vec<TokenId>>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    group: Option<String>,
}

/// Parses a prompt file. Blank lines are skipped; ids must be unique and
/// the file must hold at least one prompt.
pub fn read_prompts<R: BufRead>(reader: R, tokenizer: &dyn Tokenizer) -> Result<Vec<Prompt>> {
    let mut prompts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| HarnessError::Input(format!("line {n}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| HarnessError::Input(format!("line {n}: {m}"));
        let p: PromptLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let tokens = match (p.tokens, p.text) {
            (Some(t), None) => t,
            (None, Some(text)) => tokenizer.encode(&text).map_err(bad)?,
            _ => return Err(bad("expected exactly one of \"tokens\" and \"text\"".into())),
        };
        if !seen.insert(p.id.clone()) {
            return Err(bad(format!("duplicate prompt id {:?}", p.id)));
        }
        prompts.push(Prompt {
            id: p.id,
            tokens,
            group: p.group,
        });
    }
    if prompts.is_empty() {
        return Err(HarnessError::Input("prompt file holds no prompts".into()));
    }
    Ok(prompts)
}

pub fn load_prompts(path: &Path, tokenizer: &dyn Tokenizer) -> Result<Vec<Prompt>> {
    let file =
        std::fs::File::open(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
    read_prompts(std::io::BufReader::new(file), tokenizer)
        .map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
}

/// Every entry of a scripted suite, in suite order.
pub fn suite_prompts(suite: &ScriptedSuite) -> Vec<Prompt> {
    suite
        .entries
        .iter()
        .map(|e| Prompt {
            id: e.id.clone(),
            tokens: e.prompt.clone(),
            group: e.group.clone(),
        })
        .collect()
}

/// Writes prompts in the format [`read_prompts`] accepts.
pub fn write_prompts(path: &Path, prompts: &[Prompt]) -> std::io::Result<()> {
    let mut out = String::new();
    for p in prompts {
        out.push_str(&serde_json::to_string(p).expect("prompt serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

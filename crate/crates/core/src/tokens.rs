use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vocabulary token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for TokenId {
    fn from(id: u32) -> Self {
        TokenId(id)
    }
}

/// Vocabulary constants the engine needs: its size and the two special ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVocab")]
pub struct Vocab {
    vocab_size: u32,
    mask_id: TokenId,
    eos_id: TokenId,
}

#[derive(Deserialize)]
struct RawVocab {
    vocab_size: u32,
    mask_id: TokenId,
    eos_id: TokenId,
}

impl TryFrom<RawVocab> for Vocab {
    type Error = Error;

    fn try_from(raw: RawVocab) -> Result<Self> {
        Vocab::new(raw.vocab_size, raw.mask_id, raw.eos_id)
    }
}

impl Vocab {
    pub fn new(vocab_size: u32, mask_id: TokenId, eos_id: TokenId) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid("vocab_size must be positive"));
        }
        if mask_id.0 >= vocab_size || eos_id.0 >= vocab_size {
            return Err(Error::invalid(format!(
                "special ids (mask {mask_id}, eos {eos_id}) must be < vocab_size {vocab_size}"
            )));
        }
        if mask_id == eos_id {
            return Err(Error::invalid("mask_id and eos_id must differ"));
        }
        Ok(Vocab {
            vocab_size,
            mask_id,
            eos_id,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn contains(&self, token: TokenId) -> bool {
        token.0 < self.vocab_size
    }

    pub(crate) fn check(&self, token: TokenId) -> Result<()> {
        if self.contains(token) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "token id {token} out of range for vocab_size {}",
                self.vocab_size
            )))
        }
    }
}

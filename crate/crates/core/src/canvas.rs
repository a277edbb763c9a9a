//! The evolving response region of a run.
//!
//! Cells carry ids that survive insertions, so fills, expansion points and
//! trace entries can refer to a cell no matter how many masks were inserted
//! in front of it. Prompt tokens live outside the response and never change.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tokens::{TokenId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u64);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Masked,
    Committed(TokenId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub id: CellId,
    pub state: CellState,
}

impl Cell {
    pub fn is_masked(&self) -> bool {
        matches!(self.state, CellState::Masked)
    }

    pub fn token(&self) -> Option<TokenId> {
        match self.state {
            CellState::Masked => None,
            CellState::Committed(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    prompt: Vec<TokenId>,
    cells: Vec<Cell>,
    next_id: u64,
}

impl Canvas {
    /// A canvas whose response is `length` fresh masks.
    pub fn new(prompt: Vec<TokenId>, length: usize, vocab: &Vocab) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("canvas length must be at least 1"));
        }
        for &t in &prompt {
            vocab.check(t)?;
        }
        let mut canvas = Canvas {
            prompt,
            cells: Vec::with_capacity(length),
            next_id: 0,
        };
        canvas.push_masks(length);
        Ok(canvas)
    }

    /// Rebuilds a canvas from raw parts. Ids must be unique; the fresh-id
    /// counter resumes after the largest id present.
    pub fn from_parts(prompt: Vec<TokenId>, cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("canvas must hold at least one response cell"));
        }
        let mut seen = HashSet::with_capacity(cells.len());
        for c in &cells {
            if !seen.insert(c.id) {
                return Err(Error::invalid(format!("duplicate cell id {}", c.id)));
            }
        }
        let next_id = cells.iter().map(|c| c.id.0).max().map_or(0, |m| m + 1);
        Ok(Canvas {
            prompt,
            cells,
            next_id,
        })
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn mask_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_masked()).count()
    }

    pub fn has_masks(&self) -> bool {
        self.cells.iter().any(Cell::is_masked)
    }

    pub fn position(&self, id: CellId) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    pub fn cell(&self, id: CellId) -> Option<&Cell> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// Response tokens, `None` for masked cells.
    pub fn tokens(&self) -> Vec<Option<TokenId>> {
        self.cells.iter().map(Cell::token).collect()
    }

    /// Committed tokens in order. `None` while any mask remains.
    pub fn final_tokens(&self) -> Option<Vec<TokenId>> {
        self.cells.iter().map(Cell::token).collect()
    }

    fn fresh_id(&mut self) -> CellId {
        let id = CellId(self.next_id);
        self.next_id += 1;
        id
    }

    fn push_masks(&mut self, count: usize) {
        for _ in 0..count {
            let id = self.fresh_id();
            self.cells.push(Cell {
                id,
                state: CellState::Masked,
            });
        }
    }

    /// Appends `count` fresh masks at the end of the response.
    pub fn append_masks(&mut self, count: usize) -> Result<()> {
        if count == 0 {
            return Err(Error::invalid("append count must be at least 1"));
        }
        self.push_masks(count);
        Ok(())
    }

    /// Replaces the masked cell `id` with `count` fresh masks at the same
    /// position. Returns the ids of the inserted cells.
    pub fn replace_with_masks(&mut self, id: CellId, count: usize) -> Result<Vec<CellId>> {
        if count == 0 {
            return Err(Error::invalid("replacement count must be at least 1"));
        }
        let pos = self
            .position(id)
            .ok_or_else(|| Error::invalid(format!("no cell {id} in canvas")))?;
        if !self.cells[pos].is_masked() {
            return Err(Error::invalid(format!("cell {id} is committed")));
        }
        let fresh: Vec<Cell> = (0..count)
            .map(|_| Cell {
                id: self.fresh_id(),
                state: CellState::Masked,
            })
            .collect();
        let ids = fresh.iter().map(|c| c.id).collect();
        self.cells.splice(pos..=pos, fresh);
        Ok(ids)
    }

    /// Commits `token` into the masked cell `id`.
    pub fn commit(&mut self, id: CellId, token: TokenId, vocab: &Vocab) -> Result<()> {
        let pos = self
            .position(id)
            .ok_or_else(|| Error::invalid(format!("no cell {id} in canvas")))?;
        self.commit_at(pos, token, vocab)
    }

    pub(crate) fn commit_at(&mut self, pos: usize, token: TokenId, vocab: &Vocab) -> Result<()> {
        vocab.check(token)?;
        if token == vocab.mask_id() {
            return Err(Error::invalid("cannot commit the mask token"));
        }
        let cell = &mut self.cells[pos];
        if !cell.is_masked() {
            return Err(Error::invalid(format!("cell {} is already committed", cell.id)));
        }
        cell.state = CellState::Committed(token);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CanvasWire {
    prompt: Vec<TokenId>,
    cells: Vec<CellWire>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct CellWire {
    pub id: CellId,
    pub token: Option<TokenId>,
}

impl From<&Cell> for CellWire {
    fn from(c: &Cell) -> Self {
        CellWire {
            id: c.id,
            token: c.token(),
        }
    }
}

impl From<CellWire> for Cell {
    fn from(w: CellWire) -> Self {
        Cell {
            id: w.id,
            state: w.token.map_or(CellState::Masked, CellState::Committed),
        }
    }
}

impl Serialize for Canvas {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CanvasWire {
            prompt: self.prompt.clone(),
            cells: self.cells.iter().map(CellWire::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Canvas {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = CanvasWire::deserialize(d)?;
        Canvas::from_parts(wire.prompt, wire.cells.into_iter().map(Cell::from).collect())
            .map_err(serde::de::Error::custom)
    }
}

//! Decoding engine for masked-diffusion language models with dynamic
//! response length.
//!
//! The engine talks to the model only through [`backend::Backend`], which
//! returns per-position sufficient statistics (argmax token, its
//! probability, EOS probability). Two decoders are provided: the
//! fixed-length baseline ([`decode::baseline_decode`]) and the two-stage
//! length-adapting decoder ([`daedal::run_daedal`]), plus an independent
//! straight-line interpreter of the latter ([`reference::reference_interpret`])
//! used as a test oracle.

pub mod backend;
pub mod canvas;
pub mod config;
pub mod daedal;
pub mod decode;
pub mod error;
pub mod metrics;
pub mod record;
pub mod reference;
pub mod testing;
pub mod tokens;
pub mod trace;

pub use backend::{Backend, BackendResponse, PositionStats};
pub use canvas::{Canvas, Cell, CellId, CellState};
pub use config::DaedalConfig;
pub use error::{Error, Result};
pub use record::{Phase, RunRecord, StepEvent};
pub use tokens::{TokenId, Vocab};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

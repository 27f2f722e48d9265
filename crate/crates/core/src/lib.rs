//! Streaming evaluation of visibly pushdown transducers (VPTs) over
//! well-nested documents.
//!
//! The pipeline is: tokenize a document ([`nested`]), run the one-pass
//! preprocessing ([`engine`]) that builds a compact output set ([`ecs`]),
//! then enumerate every output with output-linear delay ([`enumtree`]).
//! [`spanner`] compiles extraction grammars into transducers so that the
//! same engine evaluates document spanners.

pub mod ecs;
pub mod engine;
pub mod enumtree;
mod error;
pub mod format;
pub mod nested;
pub mod spanner;
pub mod vpa;
pub mod vpt;

pub use error::{Error, Result};

/// Index of a state.
pub type State = u32;
/// Index of a stack symbol.
pub type StackSym = u32;
/// Index of an output symbol.
pub type OutSym = u32;
/// 1-based document position.
pub type Pos = u32;

/// An output word: `(output symbol, input position)` pairs with strictly
/// increasing positions. The empty vector is the empty word.
pub type OutputWord = Vec<(OutSym, Pos)>;

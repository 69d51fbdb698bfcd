//! Lattice-aware transformer encoding for spoken language understanding.
//!
//! ASR word lattices are fed to a small transformer encoder through
//! reachability attention masks and longest-path positions, then classified
//! into intent or slot label sets.

pub mod cli;
pub mod datasim;
pub mod error;
pub mod lattice;
pub mod masks;
pub mod pipeline;
pub mod subword;
pub mod transformer;

pub use error::{Error, Result};
pub use lattice::{Edge, Lattice, Node, NodeId, PathDistribution};
pub use masks::{AttentionMask, MaskKind};
pub use pipeline::{Encoder, InputMode};
pub use subword::Tokenizer;

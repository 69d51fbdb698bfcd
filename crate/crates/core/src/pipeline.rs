//! Turning lattices into model inputs under the four compared input modes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::datasim::{Example, LabelInventory, Task};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::masks::{binary_mask, causal_mask, prob_mask, AttentionMask};
use crate::subword::{Tokenizer, SPECIALS, UNK};
use crate::transformer::{EncodedInput, LabeledInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Viterbi path as a plain sequence under a causal mask.
    OneBest,
    /// All lattice tokens in topological order, as a plain sequence.
    Linearize,
    /// Lattice nodes, longest-path positions, reachability mask.
    LatticeBinary,
    /// Lattice nodes, longest-path positions, log predecessor-probability mask.
    LatticeProb,
}

pub const INPUT_MODES: [InputMode; 4] = [
    InputMode::OneBest,
    InputMode::Linearize,
    InputMode::LatticeBinary,
    InputMode::LatticeProb,
];

impl InputMode {
    pub fn name(self) -> &'static str {
        match self {
            InputMode::OneBest => "one_best",
            InputMode::Linearize => "linearize",
            InputMode::LatticeBinary => "lattice_binary",
            InputMode::LatticeProb => "lattice_prob",
        }
    }
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        INPUT_MODES
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown input_mode {s:?} (expected one_best, linearize, lattice_binary or lattice_prob)")))
    }
}

/// Subword tokenizer plus a fixed unit-to-id map: the specials first, then
/// the units in sorted order.
#[derive(Debug, Clone)]
pub struct Encoder {
    tokenizer: Tokenizer,
    ids: HashMap<String, usize>,
}

impl Encoder {
    pub fn new(tokenizer: Tokenizer) -> Self {
        let ids = SPECIALS
            .iter()
            .copied()
            .chain(tokenizer.units())
            .enumerate()
            .map(|(i, u)| (u.to_string(), i))
            .collect();
        Encoder { tokenizer, ids }
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn vocab_size(&self) -> usize {
        self.ids.len()
    }

    pub fn token_id(&self, unit: &str) -> usize {
        self.ids.get(unit).copied().unwrap_or(self.ids[UNK])
    }

    /// The lattice the model actually sees in `mode`: subword-split, and
    /// reduced to its 1-best chain for [`InputMode::OneBest`].
    pub fn view(&self, lattice: &Lattice, mode: InputMode) -> Result<Lattice> {
        let word_level = match mode {
            InputMode::OneBest => {
                let best = lattice.one_best_path()?;
                Lattice::chain(&best[1..best.len() - 1])
            }
            _ => lattice.check()?.clone(),
        };
        Ok(self.tokenizer.split_nodes(&word_level))
    }

    pub fn encode(&self, lattice: &Lattice, mode: InputMode) -> Result<EncodedInput> {
        let view = self.view(lattice, mode)?;
        let order = view.topological_order()?;
        let tokens: Vec<usize> = order
            .iter()
            .map(|&id| view.label(id).map(|l| self.token_id(l)))
            .collect::<Result<_>>()?;
        let n = order.len();
        let (positions, mask): (Vec<usize>, AttentionMask) = match mode {
            InputMode::OneBest | InputMode::Linearize => ((0..n).collect(), causal_mask(n)),
            InputMode::LatticeBinary | InputMode::LatticeProb => {
                let ldist = view.longest_path_distance()?;
                let positions = order.iter().map(|id| ldist[id]).collect();
                let mask = if mode == InputMode::LatticeBinary {
                    binary_mask(&view, &order)?
                } else {
                    prob_mask(&view, &order)?
                };
                (positions, mask)
            }
        };
        let end = order
            .iter()
            .position(|&id| id == view.end())
            .ok_or(Error::UnknownNode(view.end()))?;
        EncodedInput::new(tokens, positions, mask, end)
    }
}

/// Encoded inputs with gold label indices for `task`.
pub fn prepare(
    examples: &[Example],
    encoder: &Encoder,
    labels: &LabelInventory,
    task: Task,
    mode: InputMode,
) -> Result<Vec<LabeledInput>> {
    examples
        .iter()
        .map(|e| {
            Ok(LabeledInput {
                input: encoder.encode(&e.lattice, mode)?,
                gold: labels.gold(task, e)?,
            })
        })
        .collect()
}

//! Synthetic airline-travel corpus, simulated recognition lattices, and
//! evaluation metrics.

pub mod grammar;
pub mod metrics;
pub mod noise;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grammar::{default_grammar, Grammar, Utterance};
pub use metrics::{corpus_wer, edit_distance, evaluate, wer, Metrics};
pub use noise::{corrupt_words, Confuser, NoiseModel};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, END_LABEL, START_LABEL};
use crate::subword::Tokenizer;

/// Training-set size of the original airline-travel benchmark.
pub const DEFAULT_TRAIN_SIZE: usize = 4478;
pub const DEFAULT_SUBSTRINGS: usize = 500;
pub const DEFAULT_MAX_SUBSTRING: usize = 6;

/// One utterance: lattice, clean reference words, and gold label names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub lattice: Lattice,
    pub reference: Vec<String>,
    pub intents: Vec<String>,
    pub slots: Vec<String>,
}

impl Example {
    /// A clean example whose lattice is the reference chain.
    pub fn clean(u: Utterance) -> Self {
        Example {
            lattice: Lattice::chain(&u.words),
            reference: u.words,
            intents: u.intents,
            slots: u.slots,
        }
    }

    /// 1-best words without the `<s>`/`</s>` markers.
    pub fn one_best_words(&self) -> Result<Vec<String>> {
        Ok(strip_markers(self.lattice.one_best_path()?))
    }

    /// Utterance-level WER of the 1-best path.
    pub fn one_best_wer(&self) -> Result<f64> {
        wer(&self.one_best_words()?, &self.reference)
    }
}

pub fn strip_markers(words: Vec<String>) -> Vec<String> {
    words
        .into_iter()
        .filter(|w| w != START_LABEL && w != END_LABEL)
        .collect()
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in examples {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Example = serde_json::from_str(&line)
            .map_err(|err| Error::Format(format!("{}:{}: {err}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Ordered intent and slot label names; indices are classifier outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelInventory {
    pub intents: Vec<String>,
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Intent,
    Slot,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intent" => Ok(Task::Intent),
            "slot" => Ok(Task::Slot),
            _ => Err(Error::Config(format!(
                "unknown task {s:?} (expected intent or slot)"
            ))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Intent => "intent",
            Task::Slot => "slot",
        })
    }
}

impl LabelInventory {
    pub fn from_grammar(g: &Grammar) -> Self {
        LabelInventory {
            intents: g.intent_labels(),
            slots: g.slot_labels(),
        }
    }

    pub fn labels(&self, task: Task) -> &[String] {
        match task {
            Task::Intent => &self.intents,
            Task::Slot => &self.slots,
        }
    }

    /// Sorted label indices of `names` for `task`.
    pub fn indices(&self, task: Task, names: &[String]) -> Result<Vec<usize>> {
        let labels = self.labels(task);
        let mut out = names
            .iter()
            .map(|n| {
                labels
                    .iter()
                    .position(|l| l == n)
                    .ok_or_else(|| Error::Config(format!("unknown {task} label {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn gold(&self, task: Task, e: &Example) -> Result<Vec<usize>> {
        match task {
            Task::Intent => self.indices(task, &e.intents),
            Task::Slot => self.indices(task, &e.slots),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The clean setting plus three noisy conditions, with the 1-best WER each
/// preset is calibrated to.
pub const PRESETS: [(&str, f64); 4] = [
    ("clean", 0.0),
    ("cond1", 0.1555),
    ("cond2", 0.2630),
    ("cond3", 0.3869),
];

/// Noise model of a named preset.
pub fn preset(name: &str) -> Result<NoiseModel> {
    let p_sub = match name {
        "clean" => 0.0,
        "cond1" => 0.2970,
        "cond2" => 0.5110,
        "cond3" => 0.7490,
        _ => {
            return Err(Error::Config(format!(
                "unknown noise preset {name:?} (expected clean, cond1, cond2 or cond3)"
            )))
        }
    };
    Ok(NoiseModel {
        p_sub,
        ..NoiseModel::default()
    })
}

pub fn preset_target(name: &str) -> Option<f64> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|&(_, t)| t)
}

/// `size` clean examples. Intent groups are assigned round-robin (so group
/// counts differ by at most one) and the order is then shuffled.
pub fn generate_corpus(grammar: &Grammar, size: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grammar.groups.len();
    let mut groups: Vec<usize> = (0..size).map(|i| i % n).collect();
    groups.shuffle(&mut rng);
    groups
        .into_iter()
        .map(|g| Example::clean(grammar.sample_group(g, &mut rng)))
        .collect()
}

fn example_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Replaces the lattice of `example` by a simulated recognition lattice of
/// its reference.
pub fn corrupt(
    example: &Example,
    noise: &NoiseModel,
    confuser: &Confuser,
    rng: &mut ChaCha8Rng,
) -> Example {
    Example {
        lattice: corrupt_words(&example.reference, noise, confuser, rng),
        ..example.clone()
    }
}

/// Corrupts every example with its own stream derived from `noise.seed`
/// and the example index.
pub fn corrupt_all(
    examples: &[Example],
    noise: &NoiseModel,
    confuser: &Confuser,
) -> Result<Vec<Example>> {
    noise.validate()?;
    Ok(examples
        .iter()
        .enumerate()
        .map(|(i, e)| corrupt(e, noise, confuser, &mut example_rng(noise.seed, i)))
        .collect())
}

/// Total 1-best edits over total reference words.
pub fn one_best_wer(examples: &[Example]) -> Result<f64> {
    let pairs = examples
        .iter()
        .map(|e| Ok((e.one_best_words()?, e.reference.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(corpus_wer(&pairs))
}

/// Subword vocabulary from every word in the corpus lattices.
pub fn build_tokenizer(examples: &[Example]) -> Tokenizer {
    let words = examples.iter().flat_map(|e| {
        e.lattice
            .nodes()
            .iter()
            .map(|n| n.label.as_str())
            .filter(|l| *l != START_LABEL && *l != END_LABEL)
            .map(|l| (l, 1))
    });
    Tokenizer::from_word_counts(words, DEFAULT_SUBSTRINGS, DEFAULT_MAX_SUBSTRING)
}

/// Bisects `p_sub` until the 1-best WER of `examples` corrupted with it is
/// within `tol` of `target`. Returns the noise model and its measured WER.
pub fn calibrate(
    examples: &[Example],
    base: &NoiseModel,
    confuser: &Confuser,
    target: f64,
    tol: f64,
) -> Result<(NoiseModel, f64)> {
    let measure = |p: f64| -> Result<(NoiseModel, f64)> {
        let noise = NoiseModel { p_sub: p, ..*base };
        let w = one_best_wer(&corrupt_all(examples, &noise, confuser)?)?;
        Ok((noise, w))
    };
    let (mut lo, mut hi) = (0.0, 0.999);
    let mut best = measure(hi)?;
    if best.1 < target {
        return Ok(best);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let m = measure(mid)?;
        if (m.1 - target).abs() < (best.1 - target).abs() {
            best = m;
        }
        if (m.1 - target).abs() <= tol {
            break;
        }
        if m.1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_seed_dependent() {
        let g = default_grammar();
        assert_eq!(generate_corpus(&g, 20, 5), generate_corpus(&g, 20, 5));
        assert_ne!(generate_corpus(&g, 20, 5), generate_corpus(&g, 20, 6));
        assert_eq!(generate_corpus(&g, 1, 5).len(), 1);
    }

    #[test]
    fn example_json_field_order() {
        let e = Example::clean(Utterance {
            words: vec!["hi".into()],
            intents: vec!["a".into()],
            slots: vec![],
        });
        let s = serde_json::to_string(&e).unwrap();
        let keys: Vec<usize> = ["\"lattice\"", "\"reference\"", "\"intents\"", "\"slots\""]
            .iter()
            .map(|k| s.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{s}");
        assert_eq!(serde_json::from_str::<Example>(&s).unwrap(), e);
    }

    #[test]
    fn label_indices() {
        let inv = LabelInventory {
            intents: vec!["a".into(), "b".into()],
            slots: vec!["s".into()],
        };
        assert_eq!(
            inv.indices(Task::Intent, &["b".into(), "a".into()])
                .unwrap(),
            [0, 1]
        );
        assert!(inv.indices(Task::Slot, &["zz".into()]).is_err());
    }

    #[test]
    fn clean_preset_has_zero_wer() {
        let g = default_grammar();
        let clean = generate_corpus(&g, 50, 1);
        let conf = Confuser::new(g.vocabulary());
        let noisy = corrupt_all(&clean, &preset("clean").unwrap(), &conf).unwrap();
        assert_eq!(noisy, clean);
        assert_eq!(one_best_wer(&noisy).unwrap(), 0.0);
        assert!(preset("cond9").is_err());
    }
}

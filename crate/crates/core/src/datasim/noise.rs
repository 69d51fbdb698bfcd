//! Simulated recognition noise: turns a clean word sequence into a
//! confusion-network lattice.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::metrics::edit_distance;
use crate::error::{Error, Result};
use crate::lattice::{Edge, Lattice, Node, NodeId, END_LABEL, START_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Probability that a word position becomes a confusion set.
    pub p_sub: f64,
    /// Alternatives per confusion set, including the true word.
    pub k: usize,
    /// Softmax temperature applied to the alternative scores.
    pub temperature: f64,
    /// Score bonus of the true word over the N(0, 1) distractor scores.
    pub true_bonus: f64,
    /// Probability that a word can be skipped (deletion).
    pub p_del: f64,
    /// Probability that a spurious word is inserted after a word.
    pub p_ins: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            p_sub: 0.0,
            k: 3,
            temperature: 1.0,
            true_bonus: 0.5,
            p_del: 0.0,
            p_ins: 0.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_sub", self.p_sub),
            ("p_del", self.p_del),
            ("p_ins", self.p_ins),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1)")));
            }
        }
        if self.k < 1 {
            return Err(Error::Config(
                "confusion-set size k must be at least 1".into(),
            ));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

const FILLERS: &[&str] = &["uh", "um", "the", "a", "and", "oh"];

const SIMILAR: &[&str] = &[
    "aeiou", "bp", "dt", "gk", "fv", "sz", "mn", "lr", "cks", "wv", "jg", "hf", "xks", "yi", "qk",
];

/// Distractor source: grammar-vocabulary near neighbours plus phonetically
/// flavoured random edits.
#[derive(Debug, Clone)]
pub struct Confuser {
    vocabulary: Vec<String>,
}

impl Confuser {
    pub fn new(vocabulary: impl IntoIterator<Item = String>) -> Self {
        Confuser {
            vocabulary: vocabulary
                .into_iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        }
    }

    /// Vocabulary words 1 or 2 character edits away from `word`.
    pub fn neighbours(&self, word: &str) -> Vec<&str> {
        let w: Vec<char> = word.chars().collect();
        self.vocabulary
            .iter()
            .filter(|v| {
                let c: Vec<char> = v.chars().collect();
                w.len().abs_diff(c.len()) <= 2 && (1..=2).contains(&edit_distance(&w, &c))
            })
            .map(String::as_str)
            .collect()
    }

    fn edit<R: Rng>(word: &[char], rng: &mut R) -> Vec<char> {
        let mut w = word.to_vec();
        let pos = rng.random_range(0..w.len());
        match rng.random_range(0..4) {
            // Substitute with a similar-sounding character.
            0 | 1 => {
                let c = w[pos];
                let class = SIMILAR
                    .iter()
                    .find(|cl| cl.contains(c))
                    .copied()
                    .unwrap_or("aeiou");
                let options: Vec<char> = class.chars().filter(|&o| o != c).collect();
                if let Some(&o) = options.choose(rng) {
                    w[pos] = o;
                }
            }
            2 if w.len() > 2 => {
                w.remove(pos);
            }
            _ => {
                let v = *['a', 'e', 'i', 'o', 'u'].choose(rng).expect("vowels");
                w.insert(pos, v);
            }
        }
        w
    }

    /// `n` distinct strings different from `word`.
    pub fn distractors<R: Rng>(&self, word: &str, n: usize, rng: &mut R) -> Vec<String> {
        let mut out: Vec<String> = Vec::with_capacity(n);
        let neighbours = self.neighbours(word);
        let chars: Vec<char> = word.chars().collect();
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            let fresh: Vec<&&str> = neighbours
                .iter()
                .filter(|c| !out.iter().any(|o| o == **c))
                .collect();
            let candidate = if !fresh.is_empty() && rng.random_bool(0.5) {
                fresh.choose(rng).expect("non-empty").to_string()
            } else {
                let mut c = Self::edit(&chars, rng);
                if rng.random_bool(0.3) {
                    c = Self::edit(&c, rng);
                }
                c.into_iter().collect()
            };
            let fallback = attempts > 100;
            let candidate = if fallback {
                format!("{word}{}", "e".repeat(out.len() + 1))
            } else {
                candidate
            };
            if candidate != word && !candidate.is_empty() && !out.contains(&candidate) {
                out.push(candidate);
            }
        }
        out
    }
}

/// One lattice column: weighted alternatives plus the probability of
/// jumping past the column entirely.
#[derive(Debug, Clone)]
struct Column {
    alternatives: Vec<(String, f64)>,
    skip: f64,
}

/// Scores ~ N(0, 1) with a bonus on the true word, softmaxed at the model
/// temperature. Returns the alternatives in random order.
fn confusion_set<R: Rng>(
    word: &str,
    noise: &NoiseModel,
    confuser: &Confuser,
    rng: &mut R,
) -> Vec<(String, f64)> {
    let mut labels = vec![word.to_string()];
    labels.extend(confuser.distractors(word, noise.k - 1, rng));
    let scores: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let z: f64 = StandardNormal.sample(rng);
            (z + if i == 0 { noise.true_bonus } else { 0.0 }) / noise.temperature
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut set: Vec<(String, f64)> = labels
        .into_iter()
        .zip(exps.into_iter().map(|e| e / total))
        .collect();
    // Fisher-Yates shuffle.
    for i in (1..set.len()).rev() {
        let j = rng.random_range(0..=i);
        set.swap(i, j);
    }
    set
}

/// Builds a confusion-network lattice for `words`. Each word becomes a
/// column; with `p_sub` the column holds `k` weighted alternatives. Skip
/// edges model deletions (skippable true-word columns) and insertions
/// (optional one-word filler columns).
pub fn corrupt_words<R: Rng>(
    words: &[String],
    noise: &NoiseModel,
    confuser: &Confuser,
    rng: &mut R,
) -> Lattice {
    let mut columns: Vec<Column> = Vec::with_capacity(words.len() * 2);
    for w in words {
        let alternatives = if noise.k > 1 && rng.random_bool(noise.p_sub) {
            confusion_set(w, noise, confuser, rng)
        } else {
            vec![(w.clone(), 1.0)]
        };
        let skip = if noise.p_del > 0.0 && rng.random_bool(noise.p_del) {
            rng.random_range(0.3..0.9)
        } else {
            0.0
        };
        columns.push(Column { alternatives, skip });
        if noise.p_ins > 0.0 && rng.random_bool(noise.p_ins) {
            let filler = FILLERS.choose(rng).expect("fillers").to_string();
            columns.push(Column {
                alternatives: vec![(filler, 1.0)],
                skip: rng.random_range(0.1..0.7),
            });
        }
    }
    // A skip from the final column would have nowhere to land but </s>,
    // which is exactly what the end layer provides.
    build_lattice(&columns)
}

fn build_lattice(columns: &[Column]) -> Lattice {
    let mut nodes = vec![Node::new(0, START_LABEL)];
    let mut layers: Vec<Vec<(NodeId, f64)>> = vec![vec![(0, 1.0)]];
    let mut next: NodeId = 1;
    for col in columns {
        let mut layer = Vec::with_capacity(col.alternatives.len());
        for (label, w) in &col.alternatives {
            nodes.push(Node::new(next, label.clone()));
            layer.push((next, *w));
            next += 1;
        }
        layers.push(layer);
    }
    nodes.push(Node::new(next, END_LABEL));
    layers.push(vec![(next, 1.0)]);
    let skips: Vec<f64> = std::iter::once(0.0)
        .chain(columns.iter().map(|c| c.skip))
        .chain(std::iter::once(0.0))
        .collect();

    let mut edges = Vec::new();
    for li in 0..layers.len() - 1 {
        let s = skips[li + 1];
        for &(from, _) in &layers[li] {
            for &(to, w) in &layers[li + 1] {
                edges.push(Edge::new(from, to, (1.0 - s) * w));
            }
            if s > 0.0 {
                for &(to, w) in &layers[li + 2] {
                    edges.push(Edge::new(from, to, s * w));
                }
            }
        }
    }
    Lattice::new(nodes, edges, 0, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn confuser() -> Confuser {
        Confuser::new(words(
            "far for fare how is new york from downtown much many",
        ))
    }

    #[test]
    fn clean_noise_gives_reference_chain() {
        let w = words("how far is it");
        let l = corrupt_words(
            &w,
            &NoiseModel::default(),
            &confuser(),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert_eq!(l, Lattice::chain(&w));
    }

    #[test]
    fn neighbours_within_two_edits() {
        let c = confuser();
        assert_eq!(c.neighbours("far"), ["fare", "for"]);
        assert!(c.neighbours("downtown").is_empty());
    }

    #[test]
    fn distractors_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for w in ["far", "q", "747", "milwaukee"] {
            let d = confuser().distractors(w, 4, &mut rng);
            let set: BTreeSet<_> = d.iter().collect();
            assert_eq!(set.len(), 4);
            assert!(!d.iter().any(|x| x == w));
        }
    }

    #[test]
    fn noisy_lattices_validate() {
        let noise = NoiseModel {
            p_sub: 0.9,
            k: 3,
            p_del: 0.3,
            p_ins: 0.3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let l = corrupt_words(
                &words("how far is new york from downtown"),
                &noise,
                &confuser(),
                &mut rng,
            );
            assert!(l.is_valid(), "{:?}", l.validate());
        }
    }

    #[test]
    fn invalid_rates_rejected() {
        assert!(NoiseModel {
            p_sub: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(NoiseModel {
            p_ins: -0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(NoiseModel {
            k: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(NoiseModel::default().validate().is_ok());
    }
}

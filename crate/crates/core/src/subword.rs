//! Greedy longest-prefix subword segmentation and lattice node splitting.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::Result;
use crate::lattice::{Edge, Lattice, Node, NodeId, END_LABEL, START_LABEL};

pub const UNK: &str = "<unk>";
pub const SPECIALS: [&str; 3] = [START_LABEL, END_LABEL, UNK];

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    vocab: BTreeSet<String>,
    max_piece_chars: usize,
}

impl Tokenizer {
    pub fn new<I, S>(units: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: BTreeSet<String> = units
            .into_iter()
            .map(Into::into)
            .filter(|u| !u.is_empty() && !SPECIALS.contains(&u.as_str()))
            .collect();
        let max_piece_chars = vocab.iter().map(|u| u.chars().count()).max().unwrap_or(1);
        Tokenizer {
            vocab,
            max_piece_chars,
        }
    }

    /// One unit per line; blank lines and lines starting with `#` are skipped.
    pub fn parse_vocab(text: &str) -> Self {
        Tokenizer::new(
            text.lines()
                .filter(|l| !l.starts_with('#'))
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Tokenizer::parse_vocab(&std::fs::read_to_string(path)?))
    }

    pub fn to_vocab_file(&self) -> String {
        let mut s = String::from("# subword vocabulary, one unit per line\n");
        for u in &self.vocab {
            s.push_str(u);
            s.push('\n');
        }
        s
    }

    /// Units excluding the specials, in sorted order.
    pub fn units(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.vocab.contains(unit)
    }

    /// Builds a vocabulary from word counts: every character seen plus the
    /// `n_substrings` most frequent substrings of 2..=`max_len` characters.
    /// Frequency ties break lexicographically.
    pub fn from_word_counts<'a, I>(words: I, n_substrings: usize, max_len: usize) -> Self
    where
        I: IntoIterator<Item = (&'a str, usize)>,
    {
        let mut chars = BTreeSet::new();
        let mut counts: HashMap<String, usize> = HashMap::new();
        for (word, count) in words {
            if SPECIALS.contains(&word) {
                continue;
            }
            let cs: Vec<char> = word.chars().collect();
            chars.extend(cs.iter().map(|c| c.to_string()));
            for i in 0..cs.len() {
                for len in 2..=max_len.min(cs.len() - i) {
                    let sub: String = cs[i..i + len].iter().collect();
                    *counts.entry(sub).or_default() += count;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Tokenizer::new(
            chars
                .into_iter()
                .chain(ranked.into_iter().take(n_substrings).map(|(s, _)| s)),
        )
    }

    /// Greedy longest-prefix segmentation. Characters no unit covers become
    /// one `<unk>` each; specials come back whole.
    pub fn segment(&self, word: &str) -> Vec<String> {
        if SPECIALS.contains(&word) {
            return vec![word.to_string()];
        }
        let cs: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < cs.len() {
            let longest = (1..=self.max_piece_chars.min(cs.len() - i))
                .rev()
                .find(|&len| {
                    self.vocab
                        .contains(&cs[i..i + len].iter().collect::<String>())
                });
            match longest {
                Some(len) => {
                    out.push(cs[i..i + len].iter().collect());
                    i += len;
                }
                None => {
                    out.push(UNK.to_string());
                    i += 1;
                }
            }
        }
        out
    }

    /// Replaces every node whose label segments into k > 1 pieces by a chain
    /// of k nodes. The first piece keeps the node id and takes the incoming
    /// edges; the last piece takes the outgoing edges; chain edges carry
    /// probability 1. New piece ids are allocated above the current maximum,
    /// in (node id, piece index) order.
    pub fn split_nodes(&self, lattice: &Lattice) -> Lattice {
        let mut next_id = lattice
            .nodes()
            .iter()
            .map(|n| n.id)
            .max()
            .map_or(0, |m| m + 1);
        let mut nodes = Vec::with_capacity(lattice.len());
        let mut edges = Vec::with_capacity(lattice.edges().len());
        // Original id -> id of the final piece, for rewiring outgoing edges.
        let mut tail: HashMap<NodeId, NodeId> = HashMap::new();
        for n in lattice.nodes() {
            let pieces = self.segment(&n.label);
            if pieces.len() <= 1 {
                nodes.push(n.clone());
                continue;
            }
            let origin = n.origin();
            let mut prev = n.id;
            for (k, piece) in pieces.into_iter().enumerate() {
                let id = if k == 0 {
                    n.id
                } else {
                    let id = next_id;
                    next_id += 1;
                    edges.push(Edge::new(prev, id, 1.0));
                    id
                };
                nodes.push(Node {
                    id,
                    label: piece,
                    word_origin: Some(origin),
                });
                prev = id;
            }
            tail.insert(n.id, prev);
        }
        for e in lattice.edges() {
            let from = tail.get(&e.from).copied().unwrap_or(e.from);
            edges.push(Edge::new(from, e.to, e.prob));
        }
        Lattice::new(nodes, edges, lattice.start(), lattice.end())
    }
}

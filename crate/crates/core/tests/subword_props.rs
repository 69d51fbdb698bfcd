mod common;

use std::collections::BTreeMap;

use common::{enumerate_paths, random_lattice, rng, WORDS};
use lattice_slu::subword::UNK;
use lattice_slu::{Lattice, NodeId, Tokenizer};
use proptest::prelude::*;

/// Collapses runs of pieces sharing a word origin back to that origin.
fn project(l: &Lattice, path: &[NodeId]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::new();
    for &id in path {
        let o = l.node(id).unwrap().origin();
        if out.last() != Some(&o) {
            out.push(o);
        }
    }
    out
}

fn path_map(l: &Lattice, projected: bool) -> BTreeMap<Vec<NodeId>, f64> {
    let mut m = BTreeMap::new();
    for (p, q) in enumerate_paths(l) {
        let key = if projected { project(l, &p) } else { p };
        *m.entry(key).or_insert(0.0) += q;
    }
    m
}

fn tokenizer_strategy() -> impl Strategy<Value = Tokenizer> {
    let alphabet: Vec<String> = {
        let mut cs: Vec<char> = WORDS.iter().flat_map(|w| w.chars()).collect();
        cs.sort_unstable();
        cs.dedup();
        cs.into_iter().map(String::from).collect()
    };
    let subs: Vec<String> = WORDS
        .iter()
        .flat_map(|w| {
            let cs: Vec<char> = w.chars().collect();
            (0..cs.len()).flat_map(move |i| {
                (i + 2..=cs.len()).map({
                    let cs = cs.clone();
                    move |j| cs[i..j].iter().collect::<String>()
                })
            })
        })
        .collect();
    (
        prop::sample::subsequence(subs.clone(), 0..=subs.len().min(25)),
        any::<bool>(),
    )
        .prop_map(move |(picked, all_chars)| {
            let chars = if all_chars {
                alphabet.clone()
            } else {
                alphabet[..alphabet.len() / 2].to_vec()
            };
            Tokenizer::new(chars.into_iter().chain(picked))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn splitting_preserves_paths_and_probabilities(seed in any::<u64>(), n in 2usize..=7, tok in tokenizer_strategy()) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        let s = tok.split_nodes(&l);
        prop_assert!(s.is_valid(), "{:?}", s.validate());
        let before = path_map(&l, false);
        let after = path_map(&s, true);
        prop_assert_eq!(before.len(), after.len());
        for (path, p) in &before {
            let q = after.get(path);
            prop_assert!(q.is_some(), "path {:?} lost", path);
            prop_assert!((p - q.unwrap()).abs() < 1e-12);
        }
        prop_assert_eq!(tok.split_nodes(&s), s.clone());
    }

    #[test]
    fn pieces_spell_the_word(seed in any::<u64>(), n in 2usize..=7, tok in tokenizer_strategy()) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        let s = tok.split_nodes(&l);
        for node in l.nodes() {
            let pieces: Vec<&str> = s
                .topological_order()
                .unwrap()
                .into_iter()
                .map(|id| s.node(id).unwrap())
                .filter(|m| m.origin() == node.id)
                .map(|m| m.label.as_str())
                .collect();
            prop_assert_eq!(pieces.len(), tok.segment(&node.label).len());
            if !pieces.contains(&UNK) {
                prop_assert_eq!(pieces.concat(), node.label.clone());
            }
        }
    }

    #[test]
    fn segmentation_is_greedy_longest_prefix(word in "[a-z]{1,12}", tok in tokenizer_strategy()) {
        let pieces = tok.segment(&word);
        let mut rest: &str = &word;
        for p in &pieces {
            if p == UNK {
                let c = rest.chars().next().unwrap();
                prop_assert!(!tok.contains(&c.to_string()));
                rest = &rest[c.len_utf8()..];
                continue;
            }
            prop_assert!(rest.starts_with(p.as_str()));
            // No longer unit matches here.
            let longer = (p.len() + 1..=rest.len()).any(|k| rest.is_char_boundary(k) && tok.contains(&rest[..k]));
            prop_assert!(!longer);
            rest = &rest[p.len()..];
        }
        prop_assert!(rest.is_empty());
    }
}

#[test]
fn chain_split_keeps_probability_one() {
    let tok = Tokenizer::new(["mil", "wau", "kee", "bos", "ton"]);
    let s = tok.split_nodes(&Lattice::chain(&["milwaukee", "boston"]));
    assert_eq!(s.len(), 7);
    let paths = enumerate_paths(&s);
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0].1, 1.0);
    assert_eq!(
        s.linearize().unwrap(),
        ["<s>", "mil", "wau", "kee", "bos", "ton", "</s>"]
    );
}

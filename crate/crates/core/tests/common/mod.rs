//! Random lattice generators and brute-force path oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use lattice_slu::{Edge, Lattice, Node, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const WORDS: &[&str] = &[
    "far",
    "for",
    "how",
    "is",
    "it",
    "boston",
    "milwaukee",
    "fare",
    "a",
    "from",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A valid lattice with `n >= 2` nodes. Ids are a random permutation of
/// `0..n`, so id order and topological order usually disagree. Every inner
/// node gets an edge from some earlier node and to some later node; extra
/// forward edges are added with probability `density`.
pub fn random_lattice<R: Rng>(rng: &mut R, n: usize, density: f64) -> Lattice {
    assert!(n >= 2);
    let mut ids: Vec<NodeId> = (0..n as NodeId).collect();
    ids.shuffle(rng);
    let mut adj = vec![vec![false; n]; n];
    for r in 1..n {
        let from = rng.random_range(0..r);
        adj[from][r] = true;
    }
    for r in 0..n - 1 {
        if !adj[r][r + 1..].iter().any(|&b| b) {
            let to = rng.random_range(r + 1..n);
            adj[r][to] = true;
        }
        for to in r + 1..n {
            if rng.random_bool(density) {
                adj[r][to] = true;
            }
        }
    }
    let mut nodes = Vec::with_capacity(n);
    for (r, &id) in ids.iter().enumerate() {
        let label = if r == 0 {
            "<s>".to_string()
        } else if r == n - 1 {
            "</s>".to_string()
        } else {
            WORDS[rng.random_range(0..WORDS.len())].to_string()
        };
        nodes.push(Node::new(id, label));
    }
    let mut edges = Vec::new();
    for r in 0..n - 1 {
        let targets: Vec<usize> = (r + 1..n).filter(|&t| adj[r][t]).collect();
        let weights: Vec<f64> = targets
            .iter()
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        let total: f64 = weights.iter().sum();
        for (&t, w) in targets.iter().zip(weights) {
            edges.push(Edge::new(ids[r], ids[t], w / total));
        }
    }
    Lattice::new(nodes, edges, ids[0], ids[n - 1])
}

pub fn random_words<R: Rng>(rng: &mut R, len: usize) -> Vec<String> {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
        .collect()
}

/// Every start-to-end path with its probability, by depth-first search.
pub fn enumerate_paths(l: &Lattice) -> Vec<(Vec<NodeId>, f64)> {
    let mut succ: HashMap<NodeId, Vec<(NodeId, f64)>> = HashMap::new();
    for e in l.edges() {
        succ.entry(e.from).or_default().push((e.to, e.prob));
    }
    let mut out = Vec::new();
    let mut stack = vec![(vec![l.start()], 1.0)];
    while let Some((path, p)) = stack.pop() {
        let last = *path.last().unwrap();
        if last == l.end() {
            out.push((path, p));
            continue;
        }
        for &(to, q) in succ.get(&last).map(Vec::as_slice).unwrap_or(&[]) {
            let mut next = path.clone();
            next.push(to);
            stack.push((next, p * q));
        }
    }
    out
}

/// P(path visits `j` before `i` | path visits `i`), summed over paths.
pub fn brute_predecessor_prob(paths: &[(Vec<NodeId>, f64)], j: NodeId, i: NodeId) -> f64 {
    let mut through_i = 0.0;
    let mut both = 0.0;
    for (path, p) in paths {
        if let Some(pi) = path.iter().position(|&v| v == i) {
            through_i += p;
            if path[..=pi].contains(&j) {
                both += p;
            }
        }
    }
    both / through_i
}

/// Label sequence of a node path.
pub fn labels(l: &Lattice, path: &[NodeId]) -> Vec<String> {
    path.iter()
        .map(|&id| l.label(id).unwrap().to_string())
        .collect()
}

//! Word lattices: a node-labeled DAG with one `<s>` source, one `</s>` sink
//! and a transition probability on every edge.
//!
//! Every start-to-end path is one hypothesis; its probability is the product
//! of the edge probabilities along it. All graph queries here are exact and
//! run in double precision.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

pub const START_LABEL: &str = "<s>";
pub const END_LABEL: &str = "</s>";

/// Tolerance on the outgoing-probability sum of every non-end node.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    /// Id of the word node this piece was split from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_origin: Option<NodeId>,
}

impl Node {
    pub fn new(id: NodeId, label: impl Into<String>) -> Self {
        Node {
            id,
            label: label.into(),
            word_origin: None,
        }
    }

    /// The word-level node this node stands for.
    pub fn origin(&self) -> NodeId {
        self.word_origin.unwrap_or(self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub prob: f64,
}

impl Edge {
    pub fn new(from: NodeId, to: NodeId, prob: f64) -> Self {
        Edge { from, to, prob }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeRepr {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    start: NodeId,
    end: NodeId,
}

impl From<LatticeRepr> for Lattice {
    fn from(r: LatticeRepr) -> Self {
        Lattice::new(r.nodes, r.edges, r.start, r.end)
    }
}

/// A word lattice in canonical storage order: nodes ascending by id, edges
/// ascending by `(from, to)`.
///
/// Construction never fails; call [`Lattice::validate`] (or
/// [`Lattice::check`]) before relying on the graph invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "LatticeRepr")]
pub struct Lattice {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    start: NodeId,
    end: NodeId,
}

impl Lattice {
    pub fn new(mut nodes: Vec<Node>, mut edges: Vec<Edge>, start: NodeId, end: NodeId) -> Self {
        nodes.sort_by_key(|n| n.id);
        edges.sort_by_key(|e| (e.from, e.to));
        Lattice {
            nodes,
            edges,
            start,
            end,
        }
    }

    /// `<s> w1 ... wn </s>` with ids `0..=n+1` and probability-1 edges.
    pub fn chain<S: AsRef<str>>(words: &[S]) -> Self {
        let mut nodes = vec![Node::new(0, START_LABEL)];
        for (i, w) in words.iter().enumerate() {
            nodes.push(Node::new(i as NodeId + 1, w.as_ref()));
        }
        let end = words.len() as NodeId + 1;
        nodes.push(Node::new(end, END_LABEL));
        let edges = (0..end).map(|i| Edge::new(i, i + 1, 1.0)).collect();
        Lattice::new(nodes, edges, 0, end)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn end(&self) -> NodeId {
        self.end
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .map(|i| &self.nodes[i])
            .map_err(|_| Error::UnknownNode(id))
    }

    pub fn label(&self, id: NodeId) -> Result<&str> {
        self.node(id).map(|n| n.label.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("lattice serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every violated invariant, with the offending node/edge ids.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut index: HashMap<NodeId, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                out.push(format!("duplicate node id {}", n.id));
            }
            if n.label.is_empty() {
                out.push(format!("node {} has an empty label", n.id));
            }
        }
        if self.nodes.is_empty() {
            out.push("lattice has no nodes".to_string());
            return out;
        }

        let n = self.nodes.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut out_sum = vec![0.0f64; n];
        let mut seen_edges = HashSet::new();
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (index.get(&e.from), index.get(&e.to)) else {
                for id in [e.from, e.to] {
                    if !index.contains_key(&id) {
                        out.push(format!(
                            "edge {}->{} references unknown node {}",
                            e.from, e.to, id
                        ));
                    }
                }
                continue;
            };
            if a == b {
                out.push(format!("edge {}->{} is a self-loop", e.from, e.to));
                continue;
            }
            if !(e.prob > 0.0 && e.prob <= 1.0) {
                out.push(format!(
                    "edge {}->{} has probability {} outside (0, 1]",
                    e.from, e.to, e.prob
                ));
            }
            if !seen_edges.insert((a, b)) {
                out.push(format!("duplicate edge {}->{}", e.from, e.to));
                continue;
            }
            succ[a].push(b);
            pred[b].push(a);
            out_sum[a] += e.prob;
        }

        if let Err(Error::Cycle(pos)) = kahn(&succ, &pred) {
            out.push(format!(
                "cycle detected through node {}",
                self.nodes[pos as usize].id
            ));
        }

        let sources: Vec<NodeId> = (0..n)
            .filter(|&i| pred[i].is_empty())
            .map(|i| self.nodes[i].id)
            .collect();
        let sinks: Vec<NodeId> = (0..n)
            .filter(|&i| succ[i].is_empty())
            .map(|i| self.nodes[i].id)
            .collect();
        if sources.len() != 1 {
            out.push(format!(
                "expected exactly one start node (in-degree 0), found {:?}",
                sources
            ));
        }
        if sinks.len() != 1 {
            out.push(format!(
                "expected exactly one end node (out-degree 0), found {:?}",
                sinks
            ));
        }

        let start = index.get(&self.start).copied();
        let end = index.get(&self.end).copied();
        match start {
            None => out.push(format!("start node {} does not exist", self.start)),
            Some(s) => {
                if !pred[s].is_empty() {
                    out.push(format!("start node {} has incoming edges", self.start));
                }
                if self.nodes[s].label != START_LABEL {
                    out.push(format!(
                        "start node {} is labeled {:?}, expected {:?}",
                        self.start, self.nodes[s].label, START_LABEL
                    ));
                }
            }
        }
        match end {
            None => out.push(format!("end node {} does not exist", self.end)),
            Some(t) => {
                if !succ[t].is_empty() {
                    out.push(format!("end node {} has outgoing edges", self.end));
                }
                if self.nodes[t].label != END_LABEL {
                    out.push(format!(
                        "end node {} is labeled {:?}, expected {:?}",
                        self.end, self.nodes[t].label, END_LABEL
                    ));
                }
            }
        }

        if let (Some(s), Some(t)) = (start, end) {
            let fwd = reach(s, &succ);
            let bwd = reach(t, &pred);
            for i in 0..n {
                if !(fwd[i] && bwd[i]) {
                    out.push(format!(
                        "node {} is not on any start->end path",
                        self.nodes[i].id
                    ));
                }
            }
        }

        for i in 0..n {
            if succ[i].is_empty() {
                continue;
            }
            if (out_sum[i] - 1.0).abs() > NORMALIZATION_TOLERANCE {
                out.push(format!(
                    "outgoing probs of node {} sum to {}",
                    self.nodes[i].id, out_sum[i]
                ));
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// `Ok(self)` when valid, otherwise every violation as an error.
    pub fn check(&self) -> Result<&Self> {
        let v = self.validate();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidLattice(v))
        }
    }

    pub(crate) fn graph(&self) -> Result<Graph> {
        Graph::build(self)
    }

    /// Kahn's algorithm, always expanding the smallest ready node id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let g = self.graph()?;
        Ok(g.order.iter().map(|&i| g.ids[i]).collect())
    }

    /// Longest-path hop count from the start node.
    pub fn longest_path_distance(&self) -> Result<HashMap<NodeId, usize>> {
        let g = self.graph()?;
        let d = g.longest_path_distance();
        Ok(g.ids.iter().copied().zip(d).collect())
    }

    /// Total probability mass of start-prefixes reaching each node.
    pub fn forward_mass(&self) -> Result<HashMap<NodeId, f64>> {
        let g = self.graph()?;
        let s = g.index_of(self.start)?;
        let alpha = g.mass_from(s);
        Ok(g.ids.iter().copied().zip(alpha).collect())
    }

    /// Sum over directed paths `from -> to` of the product of edge probabilities.
    pub fn path_mass_between(&self, from: NodeId, to: NodeId) -> Result<f64> {
        let g = self.graph()?;
        let a = g.index_of(from)?;
        let b = g.index_of(to)?;
        Ok(g.mass_from(a)[b])
    }

    /// Probability that a start-to-end path passes through `v_j` before
    /// `v_i`, given that it passes through `v_i`. Defined as 1 for
    /// `v_j == v_i` and 0 when `v_j` is not a predecessor of `v_i`.
    pub fn predecessor_prob(&self, v_j: NodeId, v_i: NodeId) -> Result<f64> {
        let g = self.graph()?;
        let j = g.index_of(v_j)?;
        let i = g.index_of(v_i)?;
        if i == j {
            return Ok(1.0);
        }
        let s = g.index_of(self.start)?;
        let alpha = g.mass_from(s);
        let beta = g.mass_from(j)[i];
        if beta == 0.0 {
            return Ok(0.0);
        }
        Ok(alpha[j] * beta / alpha[i])
    }

    /// All nodes with a directed path to `v`, excluding `v`.
    pub fn predecessors(&self, v: NodeId) -> Result<BTreeSet<NodeId>> {
        let g = self.graph()?;
        let i = g.index_of(v)?;
        let seen = reach(i, &g.pred_idx());
        Ok((0..g.len())
            .filter(|&k| k != i && seen[k])
            .map(|k| g.ids[k])
            .collect())
    }

    /// Node ids of the most probable start-to-end path. Ties go to the
    /// lexicographically smallest id sequence.
    pub fn one_best_nodes(&self) -> Result<Vec<NodeId>> {
        let g = self.graph()?;
        let s = g.index_of(self.start)?;
        let t = g.index_of(self.end)?;
        // best[v]: highest probability of any v -> end path.
        let mut best = vec![0.0f64; g.len()];
        best[t] = 1.0;
        for &v in g.order.iter().rev() {
            for &(u, p) in &g.succ[v] {
                best[v] = best[v].max(p * best[u]);
            }
        }
        let mut path = vec![g.ids[s]];
        let mut v = s;
        while v != t {
            // succ lists are sorted by index, i.e. by id.
            let target = best[v];
            let next = g.succ[v]
                .iter()
                .find(|&&(u, p)| p * best[u] >= target * (1.0 - 1e-12))
                .map(|&(u, _)| u)
                .ok_or_else(|| Error::InvalidLattice(vec!["end unreachable".into()]))?;
            path.push(g.ids[next]);
            v = next;
        }
        Ok(path)
    }

    /// Labels of the Viterbi path, including `<s>` and `</s>`.
    pub fn one_best_path(&self) -> Result<Vec<String>> {
        self.one_best_nodes()?
            .into_iter()
            .map(|id| self.label(id).map(str::to_owned))
            .collect()
    }

    /// Labels in topological order.
    pub fn linearize(&self) -> Result<Vec<String>> {
        self.topological_order()?
            .into_iter()
            .map(|id| self.label(id).map(str::to_owned))
            .collect()
    }

    /// Product of edge probabilities along a node-id path; 0 if some hop is
    /// not an edge.
    pub fn path_probability(&self, path: &[NodeId]) -> f64 {
        path.windows(2)
            .map(|w| {
                self.edges
                    .binary_search_by_key(&(w[0], w[1]), |e| (e.from, e.to))
                    .map(|i| self.edges[i].prob)
                    .unwrap_or(0.0)
            })
            .product()
    }
}

fn reach(from: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

/// Kahn's algorithm over index adjacency with a min-index frontier. On a
/// cycle, the error carries the *position* of a node on the cycle.
fn kahn(succ: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = succ.len();
    let mut indeg: Vec<usize> = pred.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &u in &succ[v] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                heap.push(Reverse(u));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every leftover node keeps a leftover predecessor; walking backwards
    // must revisit a node, and that node lies on a cycle.
    let mut v = (0..n).find(|&i| indeg[i] > 0).expect("leftover node");
    let mut visited = vec![false; n];
    while !visited[v] {
        visited[v] = true;
        v = *pred[v]
            .iter()
            .find(|&&u| indeg[u] > 0)
            .expect("leftover node has a leftover predecessor");
    }
    Err(Error::Cycle(v as NodeId))
}

/// Index-space view of a lattice. Indices follow storage order, which is
/// ascending id order.
#[derive(Debug, Clone)]
pub(crate) struct Graph {
    pub ids: Vec<NodeId>,
    pub index: HashMap<NodeId, usize>,
    pub succ: Vec<Vec<(usize, f64)>>,
    pub pred: Vec<Vec<(usize, f64)>>,
    pub order: Vec<usize>,
}

impl Graph {
    fn build(l: &Lattice) -> Result<Self> {
        let ids: Vec<NodeId> = l.nodes.iter().map(|n| n.id).collect();
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = ids.len();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for e in &l.edges {
            let a = *index.get(&e.from).ok_or(Error::UnknownNode(e.from))?;
            let b = *index.get(&e.to).ok_or(Error::UnknownNode(e.to))?;
            succ[a].push((b, e.prob));
            pred[b].push((a, e.prob));
        }
        for list in succ.iter_mut().chain(pred.iter_mut()) {
            list.sort_by_key(|&(k, _)| k);
        }
        let plain = |adj: &Vec<Vec<(usize, f64)>>| -> Vec<Vec<usize>> {
            adj.iter()
                .map(|v| v.iter().map(|&(k, _)| k).collect())
                .collect()
        };
        let order = kahn(&plain(&succ), &plain(&pred)).map_err(|e| match e {
            Error::Cycle(pos) => Error::Cycle(ids[pos as usize]),
            other => other,
        })?;
        Ok(Graph {
            ids,
            index,
            succ,
            pred,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    pub fn pred_idx(&self) -> Vec<Vec<usize>> {
        self.pred
            .iter()
            .map(|v| v.iter().map(|&(k, _)| k).collect())
            .collect()
    }

    pub fn longest_path_distance(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.len()];
        for &v in &self.order {
            for &(u, _) in &self.pred[v] {
                d[v] = d[v].max(d[u] + 1);
            }
        }
        d
    }

    /// Path mass from `source` to every node (1 at the source itself).
    pub fn mass_from(&self, source: usize) -> Vec<f64> {
        let mut m = vec![0.0f64; self.len()];
        m[source] = 1.0;
        for &v in &self.order {
            if m[v] == 0.0 {
                continue;
            }
            for &(u, p) in &self.succ[v] {
                m[u] += m[v] * p;
            }
        }
        m
    }
}

/// Forward masses plus all-pairs path masses, for answering many
/// predecessor-probability queries on one lattice.
#[derive(Debug, Clone)]
pub struct PathDistribution {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    alpha: Vec<f64>,
    /// Row-major `beta[from * n + to]`.
    beta: Vec<f64>,
}

impl PathDistribution {
    pub fn new(lattice: &Lattice) -> Result<Self> {
        let g = lattice.graph()?;
        let n = g.len();
        let s = g.index_of(lattice.start())?;
        let alpha = g.mass_from(s);
        let mut beta = Vec::with_capacity(n * n);
        for v in 0..n {
            beta.extend(g.mass_from(v));
        }
        Ok(PathDistribution {
            ids: g.ids,
            index: g.index,
            alpha,
            beta,
        })
    }

    fn idx(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    pub fn alpha(&self, id: NodeId) -> Result<f64> {
        Ok(self.alpha[self.idx(id)?])
    }

    pub fn beta(&self, from: NodeId, to: NodeId) -> Result<f64> {
        let n = self.ids.len();
        Ok(self.beta[self.idx(from)? * n + self.idx(to)?])
    }

    pub fn predecessor_prob(&self, v_j: NodeId, v_i: NodeId) -> Result<f64> {
        let j = self.idx(v_j)?;
        let i = self.idx(v_i)?;
        if i == j {
            return Ok(1.0);
        }
        let b = self.beta[j * self.ids.len() + i];
        if b == 0.0 {
            return Ok(0.0);
        }
        Ok(self.alpha[j] * b / self.alpha[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond(p: f64) -> Lattice {
        Lattice::new(
            vec![
                Node::new(0, "<s>"),
                Node::new(1, "far"),
                Node::new(2, "for"),
                Node::new(3, "</s>"),
            ],
            vec![
                Edge::new(0, 1, p),
                Edge::new(0, 2, 1.0 - p),
                Edge::new(1, 3, 1.0),
                Edge::new(2, 3, 1.0),
            ],
            0,
            3,
        )
    }

    /// Brute-force enumeration of all start->end paths.
    fn all_paths(l: &Lattice) -> Vec<(Vec<NodeId>, f64)> {
        fn go(l: &Lattice, path: &mut Vec<NodeId>, p: f64, out: &mut Vec<(Vec<NodeId>, f64)>) {
            let v = *path.last().unwrap();
            if v == l.end() {
                out.push((path.clone(), p));
                return;
            }
            for e in l.edges().iter().filter(|e| e.from == v) {
                path.push(e.to);
                go(l, path, p * e.prob, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(l, &mut vec![l.start()], 1.0, &mut out);
        out
    }

    #[test]
    fn minimal_chain_is_valid() {
        let l = Lattice::chain(&["a"]);
        assert!(l.validate().is_empty());
    }

    #[test]
    fn unnormalized_outgoing_reported() {
        let l = Lattice::new(
            vec![Node::new(0, "<s>"), Node::new(1, "a"), Node::new(2, "</s>")],
            vec![Edge::new(0, 1, 0.5), Edge::new(1, 2, 1.0)],
            0,
            2,
        );
        assert_eq!(l.validate(), vec!["outgoing probs of node 0 sum to 0.5"]);
    }

    #[test]
    fn back_edge_reported() {
        let mut edges = Lattice::chain(&["a"]).edges().to_vec();
        edges.push(Edge::new(2, 0, 1.0));
        let l = Lattice::new(Lattice::chain(&["a"]).nodes().to_vec(), edges, 0, 2);
        let v = l.validate();
        assert!(v.iter().any(|m| m.contains("cycle detected")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("start node")), "{v:?}");
        assert!(matches!(l.topological_order(), Err(Error::Cycle(_))));
    }

    #[test]
    fn cycle_error_names_cycle_node() {
        // 0 -> 1 -> 2 -> 1, 2 -> 3: the cycle is {1, 2}.
        let l = Lattice::new(
            (0..4).map(|i| Node::new(i, "x")).collect(),
            vec![
                Edge::new(0, 1, 1.0),
                Edge::new(1, 2, 1.0),
                Edge::new(2, 1, 0.5),
                Edge::new(2, 3, 0.5),
            ],
            0,
            3,
        );
        match l.topological_order() {
            Err(Error::Cycle(id)) => assert!(id == 1 || id == 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn other_violations() {
        let l = Lattice::new(
            vec![
                Node::new(0, "<s>"),
                Node::new(1, ""),
                Node::new(2, "</s>"),
                Node::new(3, "x"),
            ],
            vec![
                Edge::new(0, 1, 1.0),
                Edge::new(1, 2, 1.5),
                Edge::new(3, 2, 1.0),
                Edge::new(1, 9, 0.1),
            ],
            0,
            2,
        );
        let v = l.validate().join("\n");
        assert!(v.contains("node 1 has an empty label"));
        assert!(v.contains("unknown node 9"));
        assert!(v.contains("outside (0, 1]"));
        assert!(v.contains("node 3 is not on any start->end path"));
        assert!(v.contains("expected exactly one start node"));
    }

    #[test]
    fn topological_order_examples() {
        assert_eq!(
            Lattice::chain(&["a"]).topological_order().unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(diamond(0.6).topological_order().unwrap(), vec![0, 1, 2, 3]);
        // Swap which id carries which label: order is still ascending id.
        let swapped = Lattice::new(
            vec![
                Node::new(0, "<s>"),
                Node::new(2, "far"),
                Node::new(1, "for"),
                Node::new(3, "</s>"),
            ],
            vec![
                Edge::new(0, 2, 0.6),
                Edge::new(0, 1, 0.4),
                Edge::new(2, 3, 1.0),
                Edge::new(1, 3, 1.0),
            ],
            0,
            3,
        );
        assert_eq!(swapped.topological_order().unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn longest_path_examples() {
        let d = Lattice::chain(&["a", "b", "c"])
            .longest_path_distance()
            .unwrap();
        for i in 0..5 {
            assert_eq!(d[&i], i as usize);
        }
        let d = diamond(0.6).longest_path_distance().unwrap();
        assert_eq!((d[&0], d[&1], d[&2], d[&3]), (0, 1, 1, 2));

        let l = Lattice::new(
            vec![
                Node::new(0, "<s>"),
                Node::new(1, "a"),
                Node::new(2, "b"),
                Node::new(3, "</s>"),
                Node::new(4, "c"),
            ],
            vec![
                Edge::new(0, 1, 0.6),
                Edge::new(0, 2, 0.4),
                Edge::new(1, 3, 1.0),
                Edge::new(2, 4, 1.0),
                Edge::new(4, 3, 1.0),
            ],
            0,
            3,
        );
        assert!(l.is_valid());
        assert_eq!(l.longest_path_distance().unwrap()[&3], 3);
    }

    #[test]
    fn forward_mass_examples() {
        let a = Lattice::chain(&["a", "b"]).forward_mass().unwrap();
        assert!(a.values().all(|&v| v == 1.0));
        let a = diamond(0.6).forward_mass().unwrap();
        assert_eq!(a[&0], 1.0);
        assert!((a[&1] - 0.6).abs() < 1e-15);
        assert!((a[&2] - 0.4).abs() < 1e-15);
        assert!((a[&3] - 1.0).abs() < 1e-15);
        let a = diamond(0.5).forward_mass().unwrap();
        assert_eq!((a[&1], a[&2], a[&3]), (0.5, 0.5, 1.0));
    }

    #[test]
    fn path_mass_examples() {
        let l = diamond(0.6);
        assert_eq!(l.path_mass_between(2, 2).unwrap(), 1.0);
        assert!((l.path_mass_between(0, 3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(l.path_mass_between(1, 2).unwrap(), 0.0);
        assert!(matches!(
            l.path_mass_between(0, 7),
            Err(Error::UnknownNode(7))
        ));
    }

    #[test]
    fn predecessor_prob_examples() {
        let c = Lattice::chain(&["a", "b", "c"]);
        for j in 0..4 {
            assert_eq!(c.predecessor_prob(j, 4).unwrap(), 1.0);
        }
        let d = diamond(0.6);
        // Brute force: paths through node 3 that contain node 1.
        let paths = all_paths(&d);
        let through: f64 = paths
            .iter()
            .filter(|(p, _)| p.contains(&3))
            .map(|x| x.1)
            .sum();
        let with1: f64 = paths
            .iter()
            .filter(|(p, _)| p.contains(&3) && p.contains(&1))
            .map(|x| x.1)
            .sum();
        assert!((d.predecessor_prob(1, 3).unwrap() - with1 / through).abs() < 1e-15);
        assert!((d.predecessor_prob(1, 3).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(d.predecessor_prob(0, 1).unwrap(), 1.0);
        assert_eq!(d.predecessor_prob(2, 1).unwrap(), 0.0);
        assert_eq!(d.predecessor_prob(3, 3).unwrap(), 1.0);
        let pd = PathDistribution::new(&d).unwrap();
        assert!((pd.predecessor_prob(2, 3).unwrap() - 0.4).abs() < 1e-15);
        assert!(pd.alpha(9).is_err());
    }

    #[test]
    fn predecessors_examples() {
        let d = diamond(0.6);
        assert!(d.predecessors(0).unwrap().is_empty());
        assert_eq!(
            d.predecessors(3).unwrap().into_iter().collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(
            d.predecessors(1).unwrap().into_iter().collect::<Vec<_>>(),
            vec![0]
        );
        assert!(d.predecessors(42).is_err());
    }

    #[test]
    fn one_best_examples() {
        assert_eq!(
            Lattice::chain(&["a", "b"]).one_best_path().unwrap(),
            ["<s>", "a", "b", "</s>"]
        );
        assert_eq!(
            diamond(0.6).one_best_path().unwrap(),
            ["<s>", "far", "</s>"]
        );
        assert_eq!(
            diamond(0.4).one_best_path().unwrap(),
            ["<s>", "for", "</s>"]
        );
        assert_eq!(diamond(0.5).one_best_nodes().unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn linearize_examples() {
        assert_eq!(
            Lattice::chain(&["a"]).linearize().unwrap(),
            ["<s>", "a", "</s>"]
        );
        assert_eq!(
            diamond(0.6).linearize().unwrap(),
            ["<s>", "far", "for", "</s>"]
        );
    }

    #[test]
    fn json_schema_and_order() {
        let text = r#"{"nodes":[{"id":3,"label":"</s>"},{"id":0,"label":"<s>"},{"id":1,"label":"a"}],"edges":[{"from":1,"to":3,"prob":1.0},{"from":0,"to":1,"prob":1.0}],"start":0,"end":3}"#;
        let l = Lattice::from_json(text).unwrap();
        assert!(l.is_valid());
        assert_eq!(
            l.to_json(),
            r#"{"nodes":[{"id":0,"label":"<s>"},{"id":1,"label":"a"},{"id":3,"label":"</s>"}],"edges":[{"from":0,"to":1,"prob":1.0},{"from":1,"to":3,"prob":1.0}],"start":0,"end":3}"#
        );
        let bad = r#"{"nodes":[],"edges":[],"start":0,"end":0,"extra":1}"#;
        assert!(Lattice::from_json(bad).is_err());
    }
}

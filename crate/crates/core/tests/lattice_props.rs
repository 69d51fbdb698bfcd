mod common;

use std::collections::BTreeSet;

use common::{brute_predecessor_prob, enumerate_paths, random_lattice, rng};
use lattice_slu::{Edge, Lattice, Node, NodeId, PathDistribution};
use proptest::prelude::*;

/// Kahn's algorithm with an explicit scan for the smallest available id.
fn reference_order(l: &Lattice) -> Vec<NodeId> {
    let mut indeg: Vec<(NodeId, usize)> = l
        .nodes()
        .iter()
        .map(|n| (n.id, l.edges().iter().filter(|e| e.to == n.id).count()))
        .collect();
    let mut out = Vec::new();
    while let Some(pos) = indeg
        .iter()
        .enumerate()
        .filter(|(_, (_, d))| *d == 0)
        .min_by_key(|(_, (id, _))| *id)
        .map(|(p, _)| p)
    {
        let (id, _) = indeg.remove(pos);
        out.push(id);
        for e in l.edges().iter().filter(|e| e.from == id) {
            if let Some(entry) = indeg.iter_mut().find(|(v, _)| *v == e.to) {
                entry.1 -= 1;
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn random_lattices_validate(seed in any::<u64>(), n in 2usize..=9) {
        let l = random_lattice(&mut rng(seed), n, 0.3);
        prop_assert!(l.is_valid(), "{:?}", l.validate());
        let total: f64 = enumerate_paths(&l).iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predecessor_prob_matches_enumeration(seed in any::<u64>(), n in 2usize..=7) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        let paths = enumerate_paths(&l);
        let pd = PathDistribution::new(&l).unwrap();
        for a in l.nodes() {
            for b in l.nodes() {
                let (j, i) = (a.id, b.id);
                let want = if i == j { 1.0 } else { brute_predecessor_prob(&paths, j, i) };
                let got = l.predecessor_prob(j, i).unwrap();
                prop_assert!((got - want).abs() < 1e-12, "P({j} before {i}) = {got}, enumeration {want}");
                prop_assert_eq!(pd.predecessor_prob(j, i).unwrap(), got);
            }
        }
    }

    #[test]
    fn forward_mass_is_mass_of_paths_through_node(seed in any::<u64>(), n in 2usize..=8) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        let paths = enumerate_paths(&l);
        let alpha = l.forward_mass().unwrap();
        for node in l.nodes() {
            let want: f64 = paths.iter().filter(|(p, _)| p.contains(&node.id)).map(|(_, q)| q).sum();
            prop_assert!((alpha[&node.id] - want).abs() < 1e-12);
        }
        prop_assert!((alpha[&l.end()] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn longest_path_distance_matches_enumeration(seed in any::<u64>(), n in 2usize..=8) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        let paths = enumerate_paths(&l);
        let ldist = l.longest_path_distance().unwrap();
        for node in l.nodes() {
            let want = paths
                .iter()
                .filter_map(|(p, _)| p.iter().position(|&v| v == node.id))
                .max()
                .unwrap();
            prop_assert_eq!(ldist[&node.id], want);
        }
        // Positions strictly increase along every edge.
        for e in l.edges() {
            prop_assert!(ldist[&e.from] < ldist[&e.to]);
        }
    }

    #[test]
    fn topological_order_is_min_id_kahn(seed in any::<u64>(), n in 2usize..=9) {
        let l = random_lattice(&mut rng(seed), n, 0.3);
        let order = l.topological_order().unwrap();
        prop_assert_eq!(&order, &reference_order(&l));
        let pos = |id: NodeId| order.iter().position(|&v| v == id).unwrap();
        for e in l.edges() {
            prop_assert!(pos(e.from) < pos(e.to));
        }
        prop_assert_eq!(order[0], l.start());
        prop_assert_eq!(*order.last().unwrap(), l.end());
        let lin = l.linearize().unwrap();
        prop_assert_eq!(lin, common::labels(&l, &order));
    }

    #[test]
    fn one_best_is_a_most_probable_path(seed in any::<u64>(), n in 2usize..=8) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        let paths = enumerate_paths(&l);
        let best = l.one_best_nodes().unwrap();
        let p_best = l.path_probability(&best);
        let max = paths.iter().map(|(_, p)| *p).fold(0.0, f64::max);
        prop_assert!(paths.iter().any(|(p, _)| *p == best));
        prop_assert!(p_best >= max * (1.0 - 1e-12));
        // Among equally probable paths the smallest id sequence wins.
        let tied: BTreeSet<Vec<NodeId>> = paths
            .iter()
            .filter(|(_, p)| *p >= max * (1.0 - 1e-12))
            .map(|(path, _)| path.clone())
            .collect();
        prop_assert_eq!(tied.iter().next().unwrap(), &best);
        prop_assert_eq!(l.one_best_path().unwrap(), common::labels(&l, &best));
    }

    #[test]
    fn predecessors_are_nodes_with_positive_mass(seed in any::<u64>(), n in 2usize..=8) {
        let l = random_lattice(&mut rng(seed), n, 0.4);
        for node in l.nodes() {
            let want: BTreeSet<NodeId> = l
                .nodes()
                .iter()
                .map(|m| m.id)
                .filter(|&m| m != node.id && l.path_mass_between(m, node.id).unwrap() > 0.0)
                .collect();
            prop_assert_eq!(l.predecessors(node.id).unwrap(), want);
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 2usize..=9) {
        let l = random_lattice(&mut rng(seed), n, 0.3);
        prop_assert_eq!(Lattice::from_json(&l.to_json()).unwrap(), l);
    }
}

#[test]
fn tied_diamond_prefers_smaller_id() {
    let l = Lattice::new(
        vec![
            Node::new(0, "<s>"),
            Node::new(1, "far"),
            Node::new(2, "for"),
            Node::new(3, "</s>"),
        ],
        vec![
            Edge::new(0, 1, 0.5),
            Edge::new(0, 2, 0.5),
            Edge::new(1, 3, 1.0),
            Edge::new(2, 3, 1.0),
        ],
        0,
        3,
    );
    assert_eq!(l.one_best_nodes().unwrap(), [0, 1, 3]);
}

#[test]
fn validation_reports_each_defect() {
    let base = || {
        (
            vec![Node::new(0, "<s>"), Node::new(1, "a"), Node::new(2, "</s>")],
            vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)],
        )
    };
    let (nodes, mut edges) = base();
    edges.push(Edge::new(2, 1, 1.0));
    assert!(!Lattice::new(nodes, edges, 0, 2).is_valid());

    let (nodes, mut edges) = base();
    edges[0].prob = 0.7;
    assert!(!Lattice::new(nodes, edges, 0, 2).is_valid());

    let (mut nodes, edges) = base();
    nodes.push(Node::new(7, "orphan"));
    assert!(!Lattice::new(nodes, edges, 0, 2).is_valid());

    let (nodes, edges) = base();
    assert!(!Lattice::new(nodes, edges, 0, 9).is_valid());
    let (nodes, edges) = base();
    assert!(Lattice::new(nodes, edges, 0, 2).is_valid());
}

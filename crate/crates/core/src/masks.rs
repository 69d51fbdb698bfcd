//! Additive self-attention masks over a topologically ordered lattice.
//!
//! Entries are stored as `Option<f64>`: `None` is a masked-out key, `Some(v)`
//! adds `v <= 0` to the attention logit. Rows are queries, columns keys, and
//! both follow the node order stored with the mask.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, NodeId, PathDistribution};

/// Finite stand-in for minus infinity when applying a mask to logits.
pub const MASKED_LOGIT: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Causal,
    Binary,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    kind: MaskKind,
    order: Vec<NodeId>,
    entries: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MaskJson {
    order: Vec<NodeId>,
    entries: Vec<Vec<Option<f64>>>,
}

impl AttentionMask {
    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    /// `None` when key `j` is masked for query `i`.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        let n = self.size();
        &self.entries[i * n..(i + 1) * n]
    }

    /// Mask values with `MASKED_LOGIT` in place of masked entries.
    pub fn to_additive(&self) -> Array2<f64> {
        let n = self.size();
        Array2::from_shape_fn((n, n), |(i, j)| self.get(i, j).unwrap_or(MASKED_LOGIT))
    }

    /// Same mask with rows and columns reordered: new position `k` holds old
    /// position `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.size();
        if perm.len() != n {
            return Err(Error::Shape(format!(
                "permutation of length {} for mask of size {n}",
                perm.len()
            )));
        }
        let mut entries = Vec::with_capacity(n * n);
        for &pi in perm {
            for &pj in perm {
                entries.push(self.get(pi, pj));
            }
        }
        Ok(AttentionMask {
            kind: self.kind,
            order: perm.iter().map(|&p| self.order[p]).collect(),
            entries,
        })
    }

    /// `{"order":[ids],"entries":[[value-or-null]]}`.
    pub fn to_json(&self) -> String {
        let n = self.size();
        let j = MaskJson {
            order: self.order.clone(),
            entries: (0..n).map(|i| self.row(i).to_vec()).collect(),
        };
        serde_json::to_string(&j).expect("mask serialization is infallible")
    }
}

/// Key `j` visible to query `i` iff `j <= i`; order is `0..n`.
pub fn causal_mask(n: usize) -> AttentionMask {
    let entries = (0..n * n)
        .map(|k| if k % n <= k / n { Some(0.0) } else { None })
        .collect();
    AttentionMask {
        kind: MaskKind::Causal,
        order: (0..n as NodeId).collect(),
        entries,
    }
}

fn check_order(lattice: &Lattice, order: &[NodeId]) -> Result<()> {
    let canonical = lattice.topological_order()?;
    if canonical != order {
        return Err(Error::Shape(format!(
            "node order {order:?} is not the lattice's topological order {canonical:?}"
        )));
    }
    Ok(())
}

/// Reachability mask: 0 for the query itself and its predecessors.
pub fn binary_mask(lattice: &Lattice, order: &[NodeId]) -> Result<AttentionMask> {
    check_order(lattice, order)?;
    let pd = PathDistribution::new(lattice)?;
    reachability(order, MaskKind::Binary, |j, i| {
        Ok(if i == j || pd.beta(j, i)? > 0.0 {
            Some(0.0)
        } else {
            None
        })
    })
}

/// Reachability mask weighted by log P(v_j precedes v_i | v_i on the path).
pub fn prob_mask(lattice: &Lattice, order: &[NodeId]) -> Result<AttentionMask> {
    check_order(lattice, order)?;
    let pd = PathDistribution::new(lattice)?;
    reachability(order, MaskKind::Probabilistic, |j, i| {
        if i == j {
            return Ok(Some(0.0));
        }
        let p = pd.predecessor_prob(j, i)?;
        // Ratios of exact masses can land a hair above 1.
        Ok(if p > 0.0 { Some(p.ln().min(0.0)) } else { None })
    })
}

fn reachability<F>(order: &[NodeId], kind: MaskKind, mut entry: F) -> Result<AttentionMask>
where
    F: FnMut(NodeId, NodeId) -> Result<Option<f64>>,
{
    let n = order.len();
    let mut entries = Vec::with_capacity(n * n);
    for &qi in order {
        for &kj in order {
            entries.push(entry(kj, qi)?);
        }
    }
    Ok(AttentionMask {
        kind,
        order: order.to_vec(),
        entries,
    })
}

/// Adds mask values to `logits`; masked entries become `MASKED_LOGIT`.
pub fn apply_mask(logits: &Array2<f64>, mask: &AttentionMask) -> Result<Array2<f64>> {
    let n = mask.size();
    if logits.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "logits {:?} vs mask {n}x{n}",
            logits.dim()
        )));
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        match mask.get(i, j) {
            Some(v) => logits[[i, j]] + v,
            None => MASKED_LOGIT,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Edge, Node};

    fn diamond() -> Lattice {
        Lattice::new(
            vec![
                Node::new(0, "<s>"),
                Node::new(1, "far"),
                Node::new(2, "for"),
                Node::new(3, "</s>"),
            ],
            vec![
                Edge::new(0, 1, 0.6),
                Edge::new(0, 2, 0.4),
                Edge::new(1, 3, 1.0),
                Edge::new(2, 3, 1.0),
            ],
            0,
            3,
        )
    }

    #[test]
    fn causal_examples() {
        assert_eq!(causal_mask(1).row(0), &[Some(0.0)]);
        let m = causal_mask(3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j).is_some(), j <= i);
            }
        }
        assert_eq!(causal_mask(2).row(0), &[Some(0.0), None]);
    }

    #[test]
    fn binary_on_chain_is_causal() {
        let l = Lattice::chain(&["a", "b", "c"]);
        let order = l.topological_order().unwrap();
        assert_eq!(
            binary_mask(&l, &order).unwrap().entries,
            causal_mask(5).entries
        );
    }

    #[test]
    fn binary_diamond_rows() {
        let l = diamond();
        let m = binary_mask(&l, &[0, 1, 2, 3]).unwrap();
        assert_eq!(m.row(1), &[Some(0.0), Some(0.0), None, None]);
        assert_eq!(m.row(3), &[Some(0.0); 4]);
    }

    #[test]
    fn prob_diamond_rows() {
        let l = diamond();
        let m = prob_mask(&l, &[0, 1, 2, 3]).unwrap();
        let r3 = m.row(3);
        assert_eq!(r3[0], Some(0.0));
        assert!((r3[1].unwrap() - 0.6f64.ln()).abs() < 1e-12);
        assert!((r3[2].unwrap() - 0.4f64.ln()).abs() < 1e-12);
        assert_eq!(r3[3], Some(0.0));
        assert_eq!(m.row(1), &[Some(0.0), Some(0.0), None, None]);
        let chain = Lattice::chain(&["x", "y"]);
        let o = chain.topological_order().unwrap();
        assert_eq!(
            prob_mask(&chain, &o).unwrap().entries,
            binary_mask(&chain, &o).unwrap().entries
        );
    }

    #[test]
    fn wrong_order_rejected() {
        assert!(binary_mask(&diamond(), &[0, 2, 1, 3]).is_err());
        assert!(prob_mask(&diamond(), &[0, 1, 2]).is_err());
    }

    #[test]
    fn apply_examples() {
        let out = apply_mask(&Array2::zeros((2, 2)), &causal_mask(2)).unwrap();
        assert_eq!(out, ndarray::array![[0.0, MASKED_LOGIT], [0.0, 0.0]]);

        let logits = ndarray::array![[0.3, -1.0], [2.0, 0.5]];
        let open = AttentionMask {
            kind: MaskKind::Binary,
            order: vec![0, 1],
            entries: vec![Some(0.0); 4],
        };
        assert_eq!(apply_mask(&logits, &open).unwrap(), logits);

        let m = prob_mask(&diamond(), &[0, 1, 2, 3]).unwrap();
        let out = apply_mask(&Array2::zeros((4, 4)), &m).unwrap();
        let row: Vec<f64> = out.row(3).to_vec();
        assert_eq!(row[0], 0.0);
        assert!((row[1] - 0.6f64.ln()).abs() < 1e-12);
        assert!((row[2] - 0.4f64.ln()).abs() < 1e-12);
        assert_eq!(row[3], 0.0);
        assert!(apply_mask(&Array2::zeros((3, 3)), &m).is_err());
    }

    #[test]
    fn json_dump_uses_null_for_masked() {
        assert_eq!(
            causal_mask(2).to_json(),
            r#"{"order":[0,1],"entries":[[0.0,null],[0.0,0.0]]}"#
        );
    }

    #[test]
    fn permuted_mask_moves_rows_and_columns() {
        let m = binary_mask(&diamond(), &[0, 1, 2, 3]).unwrap();
        let p = m.permuted(&[0, 2, 1, 3]).unwrap();
        assert_eq!(p.order(), &[0, 2, 1, 3]);
        assert_eq!(p.row(1), &[Some(0.0), Some(0.0), None, None]);
        assert_eq!(p.get(3, 1), Some(0.0));
    }
}

//! Word error rate and multi-label classification scores.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levenshtein distance with unit substitution, insertion and deletion costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the reference length.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(hypothesis: &[S], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Config("WER needs a non-empty reference".into()));
    }
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    Ok(edit_distance(&h, &r) as f64 / r.len() as f64)
}

/// Corpus-level WER: total edits over total reference words.
pub fn corpus_wer<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> f64 {
    let (mut edits, mut words) = (0usize, 0usize);
    for (h, r) in pairs {
        let h: Vec<&str> = h.iter().map(AsRef::as_ref).collect();
        let r: Vec<&str> = r.iter().map(AsRef::as_ref).collect();
        edits += edit_distance(&h, &r);
        words += r.len();
    }
    if words == 0 {
        0.0
    } else {
        edits as f64 / words as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Micro-averaged F1 over all (example, label) decisions.
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Fraction of examples whose predicted set equals the gold set.
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub count: usize,
}

/// Micro-F1 and exact-match accuracy over aligned label-set lists. When
/// there are no positive decisions on either side F1 is 1.
pub fn evaluate(predicted: &[Vec<usize>], gold: &[Vec<usize>]) -> Result<Metrics> {
    if predicted.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold label sets",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fneg, mut exact) = (0, 0, 0, 0);
    for (p, g) in predicted.iter().zip(gold) {
        let p: BTreeSet<usize> = p.iter().copied().collect();
        let g: BTreeSet<usize> = g.iter().copied().collect();
        let hit = p.intersection(&g).count();
        tp += hit;
        fp += p.len() - hit;
        fneg += g.len() - hit;
        exact += usize::from(p == g);
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(Metrics {
        f1: ratio(2 * tp, 2 * tp + fp + fneg),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        accuracy: ratio(exact, gold.len()),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        count: gold.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn wer_examples() {
        let r = words("a b c d e f g h i j");
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
        assert_eq!(wer(&words("a b c d e x g h i j"), &r).unwrap(), 0.1);
        assert!(wer(&r, &Vec::<&str>::new()).is_err());
    }

    #[test]
    fn three_edit_case() {
        // "how far is new york" -> "how for is york from": sub far/for,
        // delete new, insert from.
        let r = words("how far is new york");
        let h = words("how for is york from");
        assert_eq!(edit_distance(&h, &r), 3);
        assert!((wer(&h, &r).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn evaluate_examples() {
        let gold = vec![vec![0], vec![1, 2], vec![2]];
        let perfect = evaluate(&gold, &gold).unwrap();
        assert_eq!((perfect.f1, perfect.accuracy), (1.0, 1.0));
        let empty = evaluate(&[vec![], vec![], vec![]], &gold).unwrap();
        assert_eq!(empty.f1, 0.0);

        // tp: {0}, {1}; fp: {3}; fn: {2}, {2}.
        let pred = vec![vec![0], vec![1, 3], vec![]];
        let m = evaluate(&pred, &gold).unwrap();
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (2, 1, 2)
        );
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-15);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!(evaluate(&pred[..2], &gold).is_err());
    }
}

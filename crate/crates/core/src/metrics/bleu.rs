use std::hash::Hash;

use super::ngram::counts;

/// Sentence-level BLEU-`n`: geometric mean of clipped n-gram precisions of orders
/// `1..=n` times the brevity penalty against the closest reference length.
/// Zero when any precision is zero or the candidate is empty.
pub fn bleu<T: Eq + Hash>(candidate: &[T], refs: &[&[T]], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "BLEU order must be 1..=4");
    assert!(!refs.is_empty(), "BLEU needs at least one reference");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for order in 1..=n {
        let (clipped, total) = clipped_counts(candidate, refs, order);
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    brevity_penalty(candidate.len(), refs) * (log_sum / n as f64).exp()
}

/// `(clipped matches, candidate n-gram total)` for one order.
pub(crate) fn clipped_counts<T: Eq + Hash>(
    candidate: &[T],
    refs: &[&[T]],
    order: usize,
) -> (usize, usize) {
    let cand = counts(candidate, order);
    let total: usize = cand.values().sum();
    let ref_counts: Vec<_> = refs.iter().map(|r| counts(r, order)).collect();
    let clipped = cand
        .iter()
        .map(|(g, &c)| {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(g).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            c.min(max_ref)
        })
        .sum();
    (clipped, total)
}

fn brevity_penalty<T>(cand_len: usize, refs: &[&[T]]) -> f64 {
    // closest reference length, shorter one on ties
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - cand_len as i64).abs(), l))
        .unwrap();
    if cand_len > r {
        1.0
    } else {
        (1.0 - r as f64 / cand_len as f64).exp()
    }
}

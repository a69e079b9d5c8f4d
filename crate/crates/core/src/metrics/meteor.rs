/// Simplified METEOR against one reference: exact matches first, then stem
/// matches, each candidate token taking the first free reference position in
/// order. Returns `(matches, chunks)`.
pub(crate) fn align<T: PartialEq, S: PartialEq>(
    candidate: &[T],
    reference: &[T],
    stem: &impl Fn(&T) -> S,
) -> (usize, usize) {
    let mut ref_used = vec![false; reference.len()];
    let mut cand_to_ref: Vec<Option<usize>> = vec![None; candidate.len()];
    for (i, c) in candidate.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && reference[j] == *c) {
            ref_used[j] = true;
            cand_to_ref[i] = Some(j);
        }
    }
    for (i, c) in candidate.iter().enumerate() {
        if cand_to_ref[i].is_some() {
            continue;
        }
        let sc = stem(c);
        if let Some(j) = (0..reference.len()).find(|&j| !ref_used[j] && stem(&reference[j]) == sc) {
            ref_used[j] = true;
            cand_to_ref[i] = Some(j);
        }
    }
    let pairs: Vec<(usize, usize)> = cand_to_ref
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return (0, 0);
    }
    let breaks = pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    (pairs.len(), breaks + 1)
}

/// `F_mean · (1 − 0.5 · (chunks / matches)³)` with `F_mean = 10PR / (R + 9P)`,
/// maximized over references; zero without any match.
pub fn meteor_simple<T: PartialEq, S: PartialEq>(
    candidate: &[T],
    refs: &[&[T]],
    stem: impl Fn(&T) -> S,
) -> f64 {
    assert!(!refs.is_empty(), "METEOR needs at least one reference");
    refs.iter()
        .map(|r| {
            let (m, chunks) = align(candidate, r, &stem);
            if m == 0 {
                return 0.0;
            }
            let p = m as f64 / candidate.len() as f64;
            let rec = m as f64 / r.len() as f64;
            let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
            let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
            f_mean * (1.0 - penalty)
        })
        .fold(0.0, f64::max)
}

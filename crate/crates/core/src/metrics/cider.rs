use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use super::ngram::counts;

pub const CIDER_MAX_N: usize = 4;

/// Document frequencies of n-grams (orders 1..=4) over a pool of reference sets.
/// Each reference set (all captions of one scene) counts as one document.
#[derive(Debug, Clone)]
pub struct IdfTable<T> {
    df: HashMap<Vec<T>, usize>,
    docs: usize,
}

impl<T: Eq + Hash + Clone> IdfTable<T> {
    pub fn build<'a, I, R>(ref_sets: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = &'a [T]>,
        T: 'a,
    {
        let mut df: HashMap<Vec<T>, usize> = HashMap::new();
        let mut docs = 0;
        for set in ref_sets {
            docs += 1;
            let mut seen: HashSet<&[T]> = HashSet::new();
            for r in set {
                for n in 1..=CIDER_MAX_N {
                    if r.len() >= n {
                        seen.extend(r.windows(n));
                    }
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_insert(0) += 1;
            }
        }
        IdfTable { df, docs }
    }

    pub fn documents(&self) -> usize {
        self.docs
    }

    pub fn df(&self, gram: &[T]) -> usize {
        self.df.get(gram).copied().unwrap_or(0)
    }

    /// `ln(N / df)`, with unseen n-grams treated as `df = 1`.
    pub fn idf(&self, gram: &[T]) -> f64 {
        if self.docs == 0 {
            return 0.0;
        }
        (self.docs as f64 / self.df(gram).max(1) as f64).ln()
    }
}

/// TF-IDF vector (raw counts times IDF) of one order, with its norm. Ordered,
/// so sums come out bit-identical in every process.
pub(crate) struct TfIdf<'a, T> {
    pub weights: BTreeMap<&'a [T], f64>,
    pub norm: f64,
}

pub(crate) fn tfidf<'a, T: Ord + Hash + Clone>(
    tokens: &'a [T],
    n: usize,
    idf: &IdfTable<T>,
) -> TfIdf<'a, T> {
    let weights: BTreeMap<&[T], f64> = counts(tokens, n)
        .into_iter()
        .map(|(g, c)| (g, c as f64 * idf.idf(g)))
        .collect();
    let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
    TfIdf { weights, norm }
}

pub(crate) fn cosine<T: Ord>(a: &TfIdf<'_, T>, b: &TfIdf<'_, T>) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.weights.len() <= b.weights.len() {
        (a, b)
    } else {
        (b, a)
    };
    let d: f64 = small
        .weights
        .iter()
        .filter_map(|(g, w)| large.weights.get(g).map(|v| w * v))
        .sum();
    d / (a.norm * b.norm)
}

/// CIDEr in `[0, 10]`: for each order 1..=4 the mean cosine between the
/// candidate's TF-IDF vector and each reference's, averaged over orders, ×10.
pub fn cider<T: Ord + Hash + Clone>(candidate: &[T], refs: &[&[T]], idf: &IdfTable<T>) -> f64 {
    if refs.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for n in 1..=CIDER_MAX_N {
        let c = tfidf(candidate, n, idf);
        let s: f64 = refs.iter().map(|r| cosine(&c, &tfidf(r, n, idf))).sum();
        total += s / refs.len() as f64;
    }
    10.0 * total / CIDER_MAX_N as f64
}

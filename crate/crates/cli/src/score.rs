//! `score`: metrics for free-text candidates against free-text references.
//!
//! Words are mapped to ids through a vocabulary built from every input, and
//! CIDEr's document frequencies come from the reference sets given, one
//! document per pair. A single pair therefore has no IDF signal and CIDEr 0.

use std::path::Path;

use askcap::metrics::{all_metrics, IdfTable, MetricScores, MixWeights};
use askcap::world::{Pos, Vocabulary, WordId};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bleu1,
    Bleu2,
    Bleu3,
    Bleu4,
    Rouge,
    Meteor,
    Cider,
    Mix,
}

impl Metric {
    pub fn pick(self, m: &MetricScores, w: &MixWeights) -> f64 {
        match self {
            Metric::Bleu1 => m.bleu[0],
            Metric::Bleu2 => m.bleu[1],
            Metric::Bleu3 => m.bleu[2],
            Metric::Bleu4 => m.bleu[3],
            Metric::Rouge => m.rouge_l,
            Metric::Meteor => m.meteor,
            Metric::Cider => m.cider,
            Metric::Mix => m.mix(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub candidate: String,
    pub refs: Vec<String>,
}

/// One pair per line: `candidate<TAB>ref one|ref two`. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_batch(text: &str) -> Result<Vec<Pair>, Failure> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (c, r) = line.split_once('\t').ok_or_else(|| {
            Failure::Usage(format!("line {}: expected candidate<TAB>refs", i + 1))
        })?;
        let refs: Vec<String> = r
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if refs.is_empty() {
            return Err(Failure::Usage(format!("line {}: no references", i + 1)));
        }
        out.push(Pair {
            candidate: c.trim().to_string(),
            refs,
        });
    }
    Ok(out)
}

pub fn load_weights(path: &Path) -> Result<MixWeights, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let w: MixWeights =
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    w.validate()?;
    Ok(w)
}

pub fn score_pairs(
    pairs: &[Pair],
    metric: Metric,
    weights: &MixWeights,
) -> Result<Vec<f64>, Failure> {
    let mut vocab = Vocabulary::new();
    let words = pairs
        .iter()
        .flat_map(|p| std::iter::once(&p.candidate).chain(&p.refs))
        .flat_map(|s| s.split_whitespace());
    for w in words {
        if vocab.id(w).is_none() {
            vocab.insert(w, Pos::Other)?;
        }
    }
    let enc = |s: &str| vocab.encode(s);
    let refs: Vec<Vec<Vec<WordId>>> = pairs
        .iter()
        .map(|p| p.refs.iter().map(|r| enc(r)).collect())
        .collect();
    let idf = IdfTable::build(refs.iter().map(|rs| rs.iter().map(Vec::as_slice)));
    Ok(pairs
        .iter()
        .zip(&refs)
        .map(|(p, rs)| {
            let r: Vec<&[WordId]> = rs.iter().map(Vec::as_slice).collect();
            metric.pick(&all_metrics(&enc(&p.candidate), &r, &idf, &vocab), weights)
        })
        .collect())
}

/// Shortest text that reads back as the same `f64`, always with a decimal point.
pub fn format_score(x: f64) -> String {
    let s = x.to_string();
    if s.contains(['.', 'e', 'N', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

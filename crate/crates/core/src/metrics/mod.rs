//! Caption metrics and the Mix reward.
//!
//! All metrics are pure functions of token sequences. BLEU, ROUGE-L and METEOR
//! lie in `[0, 1]`, CIDEr in `[0, 10]`.

mod bleu;
mod cider;
mod meteor;
mod ngram;
mod rouge;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use bleu::bleu;
pub use cider::{cider, IdfTable, CIDER_MAX_N};
pub use meteor::meteor_simple;
pub use rouge::{rouge_l, ROUGE_BETA};

use crate::error::{Error, Result};
use crate::world::{Corpus, SceneId, Vocabulary, WordId};

/// Linear weights of the Mix score. The default sums BLEU-4, ROUGE-L, METEOR and
/// CIDEr/10 with unit weight on a ×100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixWeights {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
}

impl Default for MixWeights {
    fn default() -> Self {
        MixWeights {
            bleu1: 0.0,
            bleu2: 0.0,
            bleu3: 0.0,
            bleu4: 100.0,
            rouge_l: 100.0,
            meteor: 100.0,
            cider: 10.0,
        }
    }
}

impl MixWeights {
    pub fn zero() -> Self {
        MixWeights {
            bleu1: 0.0,
            bleu2: 0.0,
            bleu3: 0.0,
            bleu4: 0.0,
            rouge_l: 0.0,
            meteor: 0.0,
            cider: 0.0,
        }
    }

    fn as_array(&self) -> [f64; 7] {
        [
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.rouge_l,
            self.meteor,
            self.cider,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || !w.iter().any(|&x| x > 0.0) {
            return Err(Error::Config(
                "mix weights must be nonnegative with at least one positive".into(),
            ));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.zip(&MixWeights::zero(), |a, _| a * c)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    fn zip(&self, o: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        MixWeights {
            bleu1: f(self.bleu1, o.bleu1),
            bleu2: f(self.bleu2, o.bleu2),
            bleu3: f(self.bleu3, o.bleu3),
            bleu4: f(self.bleu4, o.bleu4),
            rouge_l: f(self.rouge_l, o.rouge_l),
            meteor: f(self.meteor, o.meteor),
            cider: f(self.cider, o.cider),
        }
    }

    /// Largest attainable Mix value.
    pub fn max_score(&self) -> f64 {
        let w = self.as_array();
        w[..6].iter().sum::<f64>() + 10.0 * w[6]
    }
}

/// All component metrics for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScores {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
}

impl MetricScores {
    pub fn mix(&self, w: &MixWeights) -> f64 {
        w.bleu1 * self.bleu[0]
            + w.bleu2 * self.bleu[1]
            + w.bleu3 * self.bleu[2]
            + w.bleu4 * self.bleu[3]
            + w.rouge_l * self.rouge_l
            + w.meteor * self.meteor
            + w.cider * self.cider
    }
}

pub fn all_metrics(
    candidate: &[WordId],
    refs: &[&[WordId]],
    idf: &IdfTable<WordId>,
    vocab: &Vocabulary,
) -> MetricScores {
    MetricScores {
        bleu: [1, 2, 3, 4].map(|n| bleu(candidate, refs, n)),
        rouge_l: rouge_l(candidate, refs),
        meteor: meteor_simple(candidate, refs, |&t| vocab.stem(t)),
        cider: cider(candidate, refs, idf),
    }
}

/// Σ wᵢ·metricᵢ; metrics with zero weight are not evaluated.
pub fn mix_score(
    candidate: &[WordId],
    refs: &[&[WordId]],
    idf: &IdfTable<WordId>,
    weights: &MixWeights,
    vocab: &Vocabulary,
) -> f64 {
    let mut s = 0.0;
    for (n, w) in [weights.bleu1, weights.bleu2, weights.bleu3, weights.bleu4]
        .into_iter()
        .enumerate()
    {
        if w != 0.0 {
            s += w * bleu(candidate, refs, n + 1);
        }
    }
    if weights.rouge_l != 0.0 {
        s += weights.rouge_l * rouge_l(candidate, refs);
    }
    if weights.meteor != 0.0 {
        s += weights.meteor * meteor_simple(candidate, refs, |&t| vocab.stem(t));
    }
    if weights.cider != 0.0 {
        s += weights.cider * cider(candidate, refs, idf);
    }
    s
}

/// Ground-truth references and IDF statistics for a fixed pool of scenes.
#[derive(Debug, Clone)]
pub struct RefPool {
    idf: IdfTable<WordId>,
    refs: HashMap<SceneId, Vec<Vec<WordId>>>,
}

impl RefPool {
    /// Builds the pool from the GT captions of `scenes` only.
    pub fn new(corpus: &Corpus, scenes: &[SceneId]) -> Self {
        let refs: HashMap<SceneId, Vec<Vec<WordId>>> = scenes
            .iter()
            .map(|&id| {
                (
                    id,
                    corpus.refs(id).iter().map(|c| c.tokens.clone()).collect(),
                )
            })
            .collect();
        let mut ordered: Vec<_> = refs.iter().collect();
        ordered.sort_by_key(|(id, _)| **id);
        let idf = IdfTable::build(
            ordered
                .into_iter()
                .map(|(_, rs)| rs.iter().map(Vec::as_slice)),
        );
        RefPool { idf, refs }
    }

    pub fn idf(&self) -> &IdfTable<WordId> {
        &self.idf
    }

    pub fn refs(&self, scene: SceneId) -> Vec<&[WordId]> {
        self.refs
            .get(&scene)
            .map(|rs| rs.iter().map(Vec::as_slice).collect())
            .unwrap_or_default()
    }

    pub fn contains(&self, scene: SceneId) -> bool {
        self.refs.contains_key(&scene)
    }

    pub fn mix(
        &self,
        scene: SceneId,
        candidate: &[WordId],
        weights: &MixWeights,
        vocab: &Vocabulary,
    ) -> f64 {
        let refs = self.refs(scene);
        if refs.is_empty() {
            return 0.0;
        }
        mix_score(candidate, &refs, &self.idf, weights, vocab)
    }

    pub fn metrics(
        &self,
        scene: SceneId,
        candidate: &[WordId],
        vocab: &Vocabulary,
    ) -> MetricScores {
        let refs = self.refs(scene);
        if refs.is_empty() {
            return MetricScores::default();
        }
        all_metrics(candidate, &refs, &self.idf, vocab)
    }
}

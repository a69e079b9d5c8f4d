//! The teacher: answers questions, scores captions, writes captions on
//! give-up, and bills every human-equivalent interaction.

mod human;
mod ledger;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use human::{
    HumanTeacher, ObjectView, QuestionView, RespondError, RespondOutcome, ResponseKind, SceneView,
    Task, TaskKind, TaskQueue, TaskResponse,
};
pub use ledger::{SupervisionLedger, ANSWER_COST, SCORE_COST, WRITE_COST};

use crate::error::{Error, Result};
use crate::math::Rng;
use crate::metrics::{MixWeights, RefPool};
use crate::qgen::{Anchor, QType, Question};
use crate::world::{Caption, Corpus, Pos, Scene, SceneObject, Vocabulary, WordId, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherMode {
    #[default]
    Synthetic,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    /// Probability that an answer is a random word of the right part of speech.
    pub noise: f64,
    pub weights: MixWeights,
    pub mode: TeacherMode,
    /// Seconds to wait for a person before giving up on an interaction.
    pub human_timeout_secs: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            noise: 0.36,
            weights: MixWeights::default(),
            mode: TeacherMode::Synthetic,
            human_timeout_secs: 300,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!(
                "teacher noise {} outside [0, 1]",
                self.noise
            )));
        }
        self.weights.validate()
    }
}

pub trait Teacher {
    /// Answers a question about `scene` with a single word.
    fn answer(
        &mut self,
        q: &Question,
        scene: &Scene,
        ledger: &mut SupervisionLedger,
        rng: &mut Rng,
    ) -> Result<WordId>;

    /// Scores a comparison set of captions for one scene. The whole set is one
    /// scoring event.
    fn score(
        &mut self,
        scene: &Scene,
        candidates: &[&[WordId]],
        ledger: &mut SupervisionLedger,
    ) -> Result<Vec<f64>>;

    /// Hands out `m` reference captions for a scene the agent gave up on.
    fn write_caption(
        &mut self,
        scene: &Scene,
        m: usize,
        ledger: &mut SupervisionLedger,
        rng: &mut Rng,
    ) -> Result<Vec<Caption>>;
}

fn object_for<'s>(q: &Question, scene: &'s Scene) -> Option<&'s SceneObject> {
    match q.anchor {
        Anchor::Slot(s) => scene.object_at_slot(s),
        Anchor::Noun(n) => scene.object_with_category(n),
    }
}

const COUNT_WORDS: [&str; 5] = ["two", "three", "four", "five", "six"];

/// The correct answer from scene ground truth, or UNK when the question points
/// at something the scene does not contain.
pub fn ground_truth_answer(q: &Question, scene: &Scene, vocab: &Vocabulary) -> WordId {
    let Some(obj) = object_for(q, scene) else {
        return UNK;
    };
    let found = match q.qtype {
        QType::WhatObject => Some(obj.category),
        QType::WhatAction => obj.action,
        QType::WhatAttribute => obj.attributes.first().copied(),
        QType::HowMany => {
            let n = scene.count_of(obj.category);
            n.checked_sub(2)
                .and_then(|i| COUNT_WORDS.get(i))
                .and_then(|w| vocab.id(w))
        }
        QType::Where => vocab
            .words_with_pos(Pos::Adv)
            .get(obj.slot as usize)
            .copied(),
    };
    found.unwrap_or(UNK)
}

/// Oracle teacher backed by scene ground truth and the reference captions.
pub struct SyntheticTeacher<'a> {
    corpus: &'a Corpus,
    pool: &'a RefPool,
    weights: MixWeights,
    noise: f64,
}

impl<'a> SyntheticTeacher<'a> {
    pub fn new(corpus: &'a Corpus, pool: &'a RefPool, cfg: &TeacherConfig) -> Self {
        SyntheticTeacher {
            corpus,
            pool,
            weights: cfg.weights,
            noise: cfg.noise,
        }
    }
}

impl Teacher for SyntheticTeacher<'_> {
    fn answer(
        &mut self,
        q: &Question,
        scene: &Scene,
        _ledger: &mut SupervisionLedger,
        rng: &mut Rng,
    ) -> Result<WordId> {
        let truth = ground_truth_answer(q, scene, &self.corpus.vocab);
        if truth == UNK {
            return Ok(UNK);
        }
        if rng.gen_bool(self.noise) {
            let pool = self.corpus.vocab.words_with_pos(q.qtype.answer_pos());
            return Ok(*pool.choose(rng).unwrap_or(&truth));
        }
        Ok(truth)
    }

    fn score(
        &mut self,
        scene: &Scene,
        candidates: &[&[WordId]],
        ledger: &mut SupervisionLedger,
    ) -> Result<Vec<f64>> {
        if !self.pool.contains(scene.id) {
            return Err(Error::InvalidArgument(format!(
                "scene {} has no references in the scoring pool",
                scene.id
            )));
        }
        ledger.charge_scoring(scene.id, candidates);
        Ok(candidates
            .iter()
            .map(|c| {
                self.pool
                    .mix(scene.id, c, &self.weights, &self.corpus.vocab)
            })
            .collect())
    }

    fn write_caption(
        &mut self,
        scene: &Scene,
        m: usize,
        ledger: &mut SupervisionLedger,
        rng: &mut Rng,
    ) -> Result<Vec<Caption>> {
        let refs = self.corpus.refs(scene.id);
        if refs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "scene {} has no reference captions",
                scene.id
            )));
        }
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let issued = ledger.issued(scene.id);
            let fresh: Vec<usize> = (0..refs.len()).filter(|i| !issued.contains(i)).collect();
            let idx = match fresh.choose(rng) {
                Some(&i) => i,
                None => rng.gen_range(0..refs.len()),
            };
            ledger.record_issued(scene.id, idx);
            out.push(refs[idx].clone());
        }
        ledger.charge_written(out.len());
        Ok(out)
    }
}

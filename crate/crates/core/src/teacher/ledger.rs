use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::world::{SceneId, WordId};

/// Cost of one written caption, in scoring units.
pub const WRITE_COST: f64 = 5.2;
pub const SCORE_COST: f64 = 1.0;
/// Cost of one question answered by a person. Machine answers are free.
pub const ANSWER_COST: f64 = 1.13;

/// Human-effort bill. Scoring and answering are charged once per distinct
/// `(scene, caption)` and `(scene, question)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisionLedger {
    pub captions_written: u64,
    pub captions_scored: u64,
    pub questions_answered_human: u64,
    scored: BTreeSet<(SceneId, Vec<WordId>)>,
    asked: BTreeSet<(SceneId, String)>,
    /// Indices of the ground-truth captions already handed out, per scene.
    issued: BTreeMap<SceneId, Vec<usize>>,
}

impl SupervisionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> f64 {
        WRITE_COST * self.captions_written as f64
            + SCORE_COST * self.captions_scored as f64
            + ANSWER_COST * self.questions_answered_human as f64
    }

    pub fn charge_written(&mut self, n: usize) {
        self.captions_written += n as u64;
    }

    /// Charges one scoring event for a comparison set unless every caption in
    /// it was already scored for this scene. Returns whether a charge was made.
    pub fn charge_scoring(&mut self, scene: SceneId, captions: &[&[WordId]]) -> bool {
        let fresh = captions
            .iter()
            .any(|c| !self.scored.contains(&(scene, c.to_vec())));
        for c in captions {
            self.scored.insert((scene, c.to_vec()));
        }
        if fresh {
            self.captions_scored += 1;
        }
        fresh
    }

    pub fn was_scored(&self, scene: SceneId, caption: &[WordId]) -> bool {
        self.scored.contains(&(scene, caption.to_vec()))
    }

    /// Charges a human answer unless this question was already answered for the scene.
    pub fn charge_answer(&mut self, scene: SceneId, question: &str) -> bool {
        let fresh = self.asked.insert((scene, question.to_string()));
        if fresh {
            self.questions_answered_human += 1;
        }
        fresh
    }

    pub fn was_asked(&self, scene: SceneId, question: &str) -> bool {
        self.asked.contains(&(scene, question.to_string()))
    }

    pub fn issued(&self, scene: SceneId) -> &[usize] {
        self.issued.get(&scene).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn record_issued(&mut self, scene: SceneId, idx: usize) {
        self.issued.entry(scene).or_default().push(idx);
    }
}

use serde::{Deserialize, Serialize};

use super::vocab::{Pos, Vocabulary, WordId};
use crate::error::{Error, Result};

/// Maximum caption length in words, end-of-sentence excluded.
pub const MAX_CAPTION_LEN: usize = 16;

pub type SceneId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub category: WordId,
    pub attributes: Vec<WordId>,
    pub action: Option<WordId>,
    pub slot: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: usize,
    pub preposition: WordId,
    pub object: usize,
}

/// Synthetic stand-in for an image: the teacher's ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub id: SceneId,
    /// Sorted by slot; the first object is the scene's main subject.
    pub objects: Vec<SceneObject>,
    pub relations: Vec<Relation>,
}

impl Scene {
    pub fn object_at_slot(&self, slot: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.slot == slot)
    }

    pub fn object_with_category(&self, category: WordId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.category == category)
    }

    pub fn count_of(&self, category: WordId) -> usize {
        self.objects
            .iter()
            .filter(|o| o.category == category)
            .count()
    }

    /// Checks structural invariants against a vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("scene {}: {msg}", self.id)));
        if self.objects.is_empty() {
            return bad("no objects".into());
        }
        let check = |w: WordId, pos: Pos| vocab.contains(w) && vocab.pos(w) == pos;
        let mut slots: Vec<u32> = self.objects.iter().map(|o| o.slot).collect();
        slots.sort_unstable();
        slots.dedup();
        if slots.len() != self.objects.len() {
            return bad("duplicate slot".into());
        }
        for o in &self.objects {
            if !check(o.category, Pos::Noun) {
                return bad("category is not a noun".into());
            }
            if !o.attributes.iter().all(|&a| check(a, Pos::Adj)) {
                return bad("attribute is not an adjective".into());
            }
            if let Some(a) = o.action {
                if !check(a, Pos::Verb) {
                    return bad("action is not a verb".into());
                }
            }
        }
        for r in &self.relations {
            if r.subject >= self.objects.len()
                || r.object >= self.objects.len()
                || !vocab.contains(r.preposition)
            {
                return bad("relation out of range".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    Gt,
    Greedy,
    Sampled,
    Rollout,
    Replace,
}

/// Word sequence (end-of-sentence implicit) with aligned POS tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub tokens: Vec<WordId>,
    pub pos: Vec<Pos>,
    pub source: CaptionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

impl Caption {
    /// Builds a caption tagging every token from the lexicon.
    pub fn tagged(tokens: Vec<WordId>, vocab: &Vocabulary, source: CaptionSource) -> Self {
        let pos = tokens.iter().map(|&t| vocab.pos(t)).collect();
        Caption {
            tokens,
            pos,
            source,
            reward: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn with_reward(mut self, r: f64) -> Self {
        self.reward = Some(r);
        self
    }
}

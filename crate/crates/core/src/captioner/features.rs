use std::collections::HashMap;

use crate::world::{Corpus, Pos, Scene, SceneObject, Vocabulary, WordId};

/// Sparse binary object features: one-hot category, multi-hot attributes,
/// one-hot action and one-hot slot, concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEncoder {
    index: HashMap<WordId, usize>,
    slot_offset: usize,
    num_slots: usize,
}

impl ObjectEncoder {
    pub fn new(vocab: &Vocabulary, num_slots: usize) -> Self {
        let mut index = HashMap::new();
        let mut next = 0;
        for pos in [Pos::Noun, Pos::Adj, Pos::Verb] {
            for &w in vocab.words_with_pos(pos) {
                index.insert(w, next);
                next += 1;
            }
        }
        ObjectEncoder {
            index,
            slot_offset: next,
            num_slots,
        }
    }

    /// Sized for every slot that occurs in the corpus.
    pub fn for_corpus(corpus: &Corpus) -> Self {
        let max_slot = corpus
            .scenes
            .iter()
            .flat_map(|s| s.objects.iter().map(|o| o.slot as usize + 1))
            .max()
            .unwrap_or(0);
        Self::new(
            &corpus.vocab,
            max_slot.max(corpus.vocab.words_with_pos(Pos::Adv).len()),
        )
    }

    pub fn width(&self) -> usize {
        self.slot_offset + self.num_slots
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    /// Active feature indices of one object, ascending.
    pub fn encode(&self, obj: &SceneObject) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 + obj.attributes.len() + 1);
        out.extend(self.index.get(&obj.category));
        out.extend(obj.attributes.iter().filter_map(|a| self.index.get(a)));
        if let Some(a) = obj.action {
            out.extend(self.index.get(&a));
        }
        if (obj.slot as usize) < self.num_slots {
            out.push(self.slot_offset + obj.slot as usize);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn encode_scene(&self, scene: &Scene) -> Vec<Vec<usize>> {
        scene.objects.iter().map(|o| self.encode(o)).collect()
    }

    pub fn dense(&self, obj: &SceneObject) -> Vec<f64> {
        let mut v = vec![0.0; self.width()];
        for i in self.encode(obj) {
            v[i] = 1.0;
        }
        v
    }
}

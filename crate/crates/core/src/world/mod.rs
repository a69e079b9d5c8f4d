//! Synthetic scene world: vocabulary, scenes, ground-truth captions, chunking and
//! corpus files.

mod corpus;
mod gen;
mod scene;
mod vocab;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use corpus::{load_corpus, load_corpus_records, save_corpus, CORPUS_FILE, VOCAB_FILE};
pub use gen::{build_vocabulary, generate_world, realize_captions, WorldConfig, GT_PER_SCENE};
pub use scene::{Caption, CaptionSource, Relation, Scene, SceneId, SceneObject, MAX_CAPTION_LEN};
pub use vocab::{Pos, Vocabulary, WordId, BOS, EOS, UNK};

use crate::error::{Error, Result};
use crate::math::rng_for;

/// Vocabulary, scenes and their ground-truth captions. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub scenes: Vec<Scene>,
    pub gt: BTreeMap<SceneId, Vec<Caption>>,
}

impl Corpus {
    pub fn scene(&self, id: SceneId) -> Option<&Scene> {
        // ids are dense for generated corpora; fall back to a scan otherwise
        match self.scenes.get(id as usize) {
            Some(s) if s.id == id => Some(s),
            _ => self.scenes.iter().find(|s| s.id == id),
        }
    }

    pub fn refs(&self, id: SceneId) -> &[Caption] {
        self.gt.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn scene_ids(&self) -> Vec<SceneId> {
        self.scenes.iter().map(|s| s.id).collect()
    }
}

/// Assignment of training scenes to the warmup chunk and K lifetime chunks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub warmup: Vec<SceneId>,
    pub chunks: Vec<Vec<SceneId>>,
    pub gt_per_warmup_scene: usize,
    pub m: usize,
}

/// Shuffles `ids`, takes `round(warmup_fraction * N)` as warmup and deals the
/// rest into `k` chunks whose sizes differ by at most one.
pub fn split_chunks(
    ids: &[SceneId],
    warmup_fraction: f64,
    k: usize,
    seed: u64,
) -> Result<ChunkPlan> {
    if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
        return Err(Error::Config(format!(
            "warmup fraction {warmup_fraction} outside (0, 1)"
        )));
    }
    if k == 0 {
        return Err(Error::Config("need at least one lifetime chunk".into()));
    }
    let mut ids = ids.to_vec();
    ids.shuffle(&mut rng_for(seed, &[0x0073_706c_6974]));
    let n_warm = (warmup_fraction * ids.len() as f64).round() as usize;
    let rest = ids.split_off(n_warm.min(ids.len()));
    if k > rest.len() {
        return Err(Error::Config(format!(
            "{k} chunks requested but only {} lifetime scenes",
            rest.len()
        )));
    }
    let base = rest.len() / k;
    let extra = rest.len() % k;
    let mut chunks = Vec::with_capacity(k);
    let mut it = rest.into_iter();
    for c in 0..k {
        let size = base + usize::from(c < extra);
        chunks.push(it.by_ref().take(size).collect());
    }
    Ok(ChunkPlan {
        warmup: ids,
        chunks,
        gt_per_warmup_scene: GT_PER_SCENE,
        m: 2,
    })
}

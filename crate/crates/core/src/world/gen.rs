//! Synthetic scene corpus with templated ground-truth captions.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::scene::{Caption, CaptionSource, Relation, Scene, SceneObject, MAX_CAPTION_LEN};
use super::vocab::{Pos, Vocabulary, WordId};
use super::Corpus;
use crate::error::{Error, Result};
use crate::math::rng_for;

/// Ground-truth captions written per scene.
pub const GT_PER_SCENE: usize = 5;

const FUNCTION_WORDS: &[&str] = &[
    "a", "the", "is", "are", "and", "there", "this", "that", "we", "see",
];
const PREPOSITIONS: &[&str] = &["near", "behind", "beside", "under", "above", "on"];
const NOUNS: &[&str] = &[
    "dog",
    "cat",
    "man",
    "woman",
    "car",
    "horse",
    "bird",
    "boy",
    "girl",
    "bus",
    "train",
    "table",
    "ball",
    "tree",
    "truck",
    "cow",
    "sheep",
    "elephant",
    "bear",
    "zebra",
    "giraffe",
    "child",
    "player",
    "bicycle",
    "motorcycle",
    "boat",
    "airplane",
    "kite",
    "frisbee",
    "skateboard",
    "surfboard",
    "umbrella",
    "bench",
    "chair",
    "couch",
    "bed",
    "clock",
    "vase",
    "pizza",
    "cake",
    "banana",
    "apple",
    "sandwich",
    "donut",
    "laptop",
    "phone",
    "book",
    "bottle",
    "cup",
    "bowl",
    "plate",
    "flower",
    "fence",
    "sign",
    "window",
    "door",
    "lamp",
    "mirror",
    "bag",
    "hat",
    "shirt",
    "tie",
    "kitchen",
    "street",
    "beach",
    "field",
    "river",
    "mountain",
    "building",
    "tower",
    "bridge",
    "road",
    "park",
    "wave",
    "rock",
    "hill",
    "lake",
    "duck",
    "goat",
    "tiger",
];
const VERBS: &[&str] = &[
    "running", "sitting", "standing", "walking", "eating", "playing", "jumping", "flying",
    "riding", "holding", "sleeping", "swimming", "looking", "reading", "drinking", "carrying",
    "throwing", "catching", "smiling", "waiting", "climbing", "driving", "resting", "grazing",
    "lying", "surfing", "skiing", "dancing", "cooking", "parked",
];
const ADJECTIVES: &[&str] = &[
    "brown", "red", "blue", "green", "white", "black", "yellow", "small", "large", "old", "young",
    "wooden", "metal", "tall", "short", "happy", "wet", "dry", "striped", "spotted", "shiny",
    "dirty", "clean", "empty", "colorful", "orange", "pink", "gray", "bright", "dark",
];
const NUMBERS: &[&str] = &["two", "three", "four", "five", "six"];
const SLOT_ADVERBS: &[&str] = &[
    "outside",
    "inside",
    "nearby",
    "upstairs",
    "downstairs",
    "overhead",
    "outdoors",
    "indoors",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub num_scenes: usize,
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub max_attributes: usize,
    pub num_slots: usize,
    /// Probability that an object carries an action.
    pub action_prob: f64,
    /// Exponent of the Zipf law over categories, attributes and actions.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_scenes: 500,
            nouns: 60,
            verbs: 20,
            adjectives: 20,
            min_objects: 1,
            max_objects: 3,
            max_attributes: 1,
            num_slots: 6,
            action_prob: 0.8,
            zipf_exponent: 1.0,
            seed: 7,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if self.num_scenes == 0 {
            return err("num_scenes must be at least 1");
        }
        if self.nouns == 0 {
            return err("world needs at least one noun");
        }
        if self.adjectives == 0 && self.verbs == 0 {
            return err("world needs adjectives or verbs");
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return err("object range must satisfy 1 <= min <= max");
        }
        if self.max_objects > self.num_slots {
            return err("more objects than slots");
        }
        if self.num_slots > SLOT_ADVERBS.len() {
            return err("too many slots");
        }
        if !(0.0..=1.0).contains(&self.action_prob) {
            return err("action_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

fn word_list(base: &[&str], n: usize, prefix: &str) -> Vec<String> {
    (0..n)
        .map(|i| {
            base.get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("{prefix}{i}"))
        })
        .collect()
}

pub fn build_vocabulary(cfg: &WorldConfig) -> Result<Vocabulary> {
    let mut v = Vocabulary::new();
    for w in FUNCTION_WORDS.iter().chain(PREPOSITIONS) {
        v.insert(w, Pos::Other)?;
    }
    for w in word_list(NOUNS, cfg.nouns, "noun") {
        v.insert(&w, Pos::Noun)?;
    }
    for w in word_list(VERBS, cfg.verbs, "verb") {
        v.insert(&w, Pos::Verb)?;
    }
    for w in word_list(ADJECTIVES, cfg.adjectives, "adj") {
        v.insert(&w, Pos::Adj)?;
    }
    for w in NUMBERS {
        v.insert(w, Pos::Num)?;
    }
    for w in &SLOT_ADVERBS[..cfg.num_slots] {
        v.insert(w, Pos::Adv)?;
    }
    Ok(v)
}

struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, s: f64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (0..n)
            .map(|i| {
                acc += 1.0 / ((i + 1) as f64).powf(s);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        Zipf { cdf }
    }

    fn sample(&self, rng: &mut impl rand::Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }
}

/// Generates the vocabulary, `num_scenes` scenes with ids `0..num_scenes`, and
/// five ground-truth captions per scene. Pure function of the config.
pub fn generate_world(cfg: &WorldConfig) -> Result<Corpus> {
    cfg.validate()?;
    let vocab = build_vocabulary(cfg)?;
    let mut rng = rng_for(cfg.seed, &[0x0077_6f72_6c64]);
    let nouns = vocab.words_with_pos(Pos::Noun).to_vec();
    let verbs = vocab.words_with_pos(Pos::Verb).to_vec();
    let adjs = vocab.words_with_pos(Pos::Adj).to_vec();
    let preps: Vec<WordId> = PREPOSITIONS.iter().map(|p| vocab.id(p).unwrap()).collect();
    let noun_z = Zipf::new(nouns.len(), cfg.zipf_exponent);
    let verb_z = (!verbs.is_empty()).then(|| Zipf::new(verbs.len(), cfg.zipf_exponent));
    let adj_z = (!adjs.is_empty()).then(|| Zipf::new(adjs.len(), cfg.zipf_exponent));

    let mut scenes = Vec::with_capacity(cfg.num_scenes);
    let mut gt = BTreeMap::new();
    for id in 0..cfg.num_scenes as u64 {
        let k = rng.gen_range(cfg.min_objects..=cfg.max_objects);
        let mut slots: Vec<u32> = sample(&mut rng, cfg.num_slots, k)
            .into_iter()
            .map(|s| s as u32)
            .collect();
        slots.sort_unstable();
        let objects: Vec<SceneObject> = slots
            .into_iter()
            .map(|slot| {
                let category = nouns[noun_z.sample(&mut rng)];
                let mut attributes = Vec::new();
                if let Some(z) = &adj_z {
                    let n_attr = rng.gen_range(1..=cfg.max_attributes.max(1));
                    while attributes.len() < n_attr.min(adjs.len()) {
                        let a = adjs[z.sample(&mut rng)];
                        if !attributes.contains(&a) {
                            attributes.push(a);
                        }
                    }
                }
                let force_action = adjs.is_empty();
                let action = match &verb_z {
                    Some(z) if force_action || rng.gen_bool(cfg.action_prob) => {
                        Some(verbs[z.sample(&mut rng)])
                    }
                    _ => None,
                };
                SceneObject {
                    category,
                    attributes,
                    action,
                    slot,
                }
            })
            .collect();
        let mut relations = Vec::new();
        if objects.len() >= 2 {
            relations.push(Relation {
                subject: 0,
                preposition: preps[rng.gen_range(0..preps.len())],
                object: 1,
            });
        }
        if objects.len() >= 3 {
            relations.push(Relation {
                subject: 2,
                preposition: preps[rng.gen_range(0..preps.len())],
                object: 0,
            });
        }
        let scene = Scene {
            id,
            objects,
            relations,
        };
        gt.insert(id, realize_captions(&scene, &vocab));
        scenes.push(scene);
    }
    Ok(Corpus { vocab, scenes, gt })
}

/// Deterministic template realizations of a scene: `GT_PER_SCENE` distinct captions.
pub fn realize_captions(scene: &Scene, vocab: &Vocabulary) -> Vec<Caption> {
    let w = |s: &str| vocab.id(s).expect("template word in vocabulary");
    let o0 = &scene.objects[0];
    let o1 = scene.objects.get(1);
    let rel = scene
        .relations
        .first()
        .filter(|r| r.subject == 0 && r.object == 1);
    let a0 = o0.attributes.first().copied();
    let v0 = o0.action;
    let n0 = o0.category;
    let s0 = vocab
        .words_with_pos(Pos::Adv)
        .get(o0.slot as usize)
        .copied();
    let count0 = scene.count_of(n0);

    let mut out: Vec<Vec<WordId>> = Vec::new();
    let opt = |v: &mut Vec<WordId>, x: Option<WordId>| v.extend(x);

    // a brown dog running near a red ball
    let mut t = vec![w("a")];
    opt(&mut t, a0);
    t.push(n0);
    opt(&mut t, v0);
    if let (Some(r), Some(o1)) = (rel, o1) {
        t.extend([r.preposition, w("a")]);
        opt(&mut t, o1.attributes.first().copied());
        t.push(o1.category);
    }
    out.push(t);

    // a dog running near the ball
    let mut t = vec![w("a"), n0];
    opt(&mut t, v0);
    if let (Some(r), Some(o1)) = (rel, o1) {
        t.extend([r.preposition, w("the"), o1.category]);
    }
    out.push(t);

    // there is a brown dog and a red ball
    let mut t = vec![w("there"), w("is"), w("a")];
    opt(&mut t, a0);
    t.push(n0);
    if let Some(o1) = o1 {
        t.extend([w("and"), w("a")]);
        opt(&mut t, o1.attributes.first().copied());
        t.push(o1.category);
    }
    out.push(t);

    // there are two dogs running
    if count0 >= 2 {
        let num = vocab.words_with_pos(Pos::Num).get(count0 - 2).copied();
        if let Some(num) = num {
            let mut t = vec![w("there"), w("are"), num, n0];
            opt(&mut t, v0);
            out.push(t);
        }
    }

    // we see a brown dog outside
    let mut t = vec![w("we"), w("see"), w("a")];
    opt(&mut t, a0);
    t.push(n0);
    opt(&mut t, s0);
    out.push(t);

    // the brown dog is running
    let mut t = vec![w("the")];
    opt(&mut t, a0);
    t.push(n0);
    if let Some(v) = v0 {
        t.extend([w("is"), v]);
    }
    out.push(t);

    // this is a dog that is brown
    let mut t = vec![w("this"), w("is"), w("a"), n0];
    if let Some(a) = a0 {
        t.extend([w("that"), w("is"), a]);
    } else {
        opt(&mut t, v0);
    }
    out.push(t);

    // every caption names an attribute or an action of the main object
    for t in &mut out {
        let mentions = t.iter().any(|&x| Some(x) == a0 || Some(x) == v0);
        if !mentions {
            if let Some(x) = a0.or(v0) {
                t.push(x);
            }
        }
        t.truncate(MAX_CAPTION_LEN);
    }
    let mut captions: Vec<Caption> = Vec::with_capacity(GT_PER_SCENE);
    for t in out {
        if captions.len() == GT_PER_SCENE {
            break;
        }
        if !captions.iter().any(|c| c.tokens == t) {
            captions.push(Caption::tagged(t, vocab, CaptionSource::Gt));
        }
    }
    captions
}

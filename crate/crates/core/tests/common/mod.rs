#![allow(dead_code)]

pub mod checks;
pub mod oracles;

use askcap::captioner::{Block, Captioner, CaptionerParams, ModelConfig, ObjectEncoder};
use askcap::world::{Caption, CaptionSource, Pos, Scene, SceneObject, Vocabulary, WordId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 12-word vocabulary: the 3 specials plus 9 content and function words.
pub fn tiny_vocab() -> Vocabulary {
    let mut v = Vocabulary::new();
    for (w, p) in [
        ("a", Pos::Other),
        ("dog", Pos::Noun),
        ("cat", Pos::Noun),
        ("ball", Pos::Noun),
        ("brown", Pos::Adj),
        ("red", Pos::Adj),
        ("running", Pos::Verb),
        ("sitting", Pos::Verb),
        ("two", Pos::Num),
    ] {
        v.insert(w, p).unwrap();
    }
    assert_eq!(v.len(), 12);
    v
}

pub fn w(v: &Vocabulary, s: &str) -> WordId {
    v.id(s).unwrap_or_else(|| panic!("{s} missing"))
}

pub fn tiny_scene(v: &Vocabulary) -> Scene {
    Scene {
        id: 0,
        objects: vec![
            SceneObject {
                category: w(v, "dog"),
                attributes: vec![w(v, "brown")],
                action: Some(w(v, "running")),
                slot: 0,
            },
            SceneObject {
                category: w(v, "ball"),
                attributes: vec![w(v, "red")],
                action: None,
                slot: 2,
            },
        ],
        relations: vec![],
    }
}

pub fn caption(v: &Vocabulary, s: &str) -> Caption {
    Caption::tagged(v.encode(s), v, CaptionSource::Gt)
}

/// d=8 captioner over the tiny vocabulary with every block, biases included,
/// drawn at random so that no gradient vanishes by construction.
pub fn tiny_captioner(seed: u64) -> Captioner {
    let v = tiny_vocab();
    let enc = ObjectEncoder::new(&v, 3);
    let mut cap = Captioner::new(
        &v,
        enc,
        &ModelConfig {
            hidden: 8,
            pos_embed: 4,
        },
        seed,
    );
    randomize(&mut cap.params, seed, 0.5);
    cap
}

pub fn randomize(p: &mut CaptionerParams, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for b in Block::ALL {
        for x in p.block_mut(b) {
            *x = rng.gen_range(-scale..scale);
        }
    }
}

/// Worst relative error between an analytic gradient and central finite
/// differences of `f`, using `max(|a|, |n|, floor)` as the denominator.
pub fn max_rel_error(
    x: &mut [f64],
    analytic: &[f64],
    eps: f64,
    floor: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (f64, usize) {
    let mut worst = (0.0, 0);
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(x);
        x[i] = orig - eps;
        let down = f(x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    worst
}

/// Count within `k` standard deviations of its binomial expectation.
pub fn within_sigma(count: usize, n: usize, p: f64, k: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= k * sd.max(1e-12)
}

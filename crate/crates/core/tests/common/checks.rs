//! Checks shared by the unit tests and the acceptance harness.

use askcap::captioner::{caption_loss, Captioner, Forcing, TOPK};
use askcap::decision::{feature_width, ChooseMode, PolicyParams, StepFeatures, WordEmbeddings};
use std::collections::BTreeMap;

use askcap::engine::{seek_teacher, AskStrategy, Branch, CollectedItem, Interaction, SeekEnv};
use askcap::math::{rng_for, Rng};
use askcap::qgen::Question;
use askcap::teacher::{SupervisionLedger, Teacher};
use askcap::world::{Caption, CaptionSource, Pos, Scene, SceneId, WordId};
use rand::Rng as _;

use super::{caption, max_rel_error, tiny_captioner, tiny_scene, tiny_vocab, w};

/// Worst relative error of the captioner loss gradient against central
/// differences, over three random d=8 models and two captions.
pub fn captioner_grad_error(forcing_for: impl Fn(usize) -> Forcing) -> f64 {
    let v = tiny_vocab();
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let cap = tiny_captioner(seed);
        let feats = cap.encoder().encode_scene(&tiny_scene(&v));
        for text in ["a brown dog running", "two cat sitting a red ball"] {
            let c = caption(&v, text);
            let forcing = forcing_for(c.len());
            let mut grad = vec![0.0; cap.params.len()];
            caption_loss(
                &cap.params,
                feats.clone(),
                &c,
                0.7,
                0.5,
                &forcing,
                Some(&mut grad),
            );
            let mut x = cap.params.data.clone();
            let (err, _) = max_rel_error(&mut x, &grad, 1e-4, 1e-6, |p| {
                let mut q = cap.params.clone();
                q.data.copy_from_slice(p);
                caption_loss(&q, feats.clone(), &c, 0.7, 0.5, &forcing, None)
            });
            worst = worst.max(err);
        }
    }
    worst
}

/// Every forcing pattern the trainer can see.
pub fn all_forcings() -> [fn(usize) -> Forcing; 3] {
    [Forcing::inference_like, Forcing::teacher, |len| Forcing {
        own_word: (0..=len).map(|t| t % 3 == 2).collect(),
        own_pos: (0..=len).map(|t| t % 2 == 0).collect(),
    }]
}

pub fn one_hot_pos(p: Pos) -> Vec<f64> {
    let mut v = vec![0.0; Pos::COUNT];
    v[p.index()] = 1.0;
    v
}

pub fn feature(t: usize, mask: bool, entropy: f64, seed: u64, d: usize) -> StepFeatures {
    let mut rng = rng_for(seed, &[t as u64]);
    StepFeatures {
        t,
        pos_dist: one_hot_pos(Pos::Noun),
        entropy_topk: entropy,
        closeness: (0..3 * TOPK).map(|_| rng.gen_range(0.0..1.0)).collect(),
        caption_enc: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        position: t as f64 / 8.0,
        mask,
    }
}

pub fn random_steps(n: usize, seed: u64, d: usize) -> Vec<StepFeatures> {
    let mut rng = rng_for(seed, &[99]);
    (0..n)
        .map(|t| feature(t, rng.gen_bool(0.7), rng.gen_range(0.0..1.8), seed, d))
        .collect()
}

/// Worst relative error of the decision log-prob gradient at d=8, over
/// every open step and NO_ASK.
pub fn policy_grad_error() -> f64 {
    let d = 8;
    let mut worst: f64 = 0.0;
    for seed in 0..4u64 {
        let mut p = PolicyParams::new(feature_width(d), 6, seed);
        p.set_no_ask_logit(0.3);
        let steps = random_steps(6, seed + 40, d);
        let open: Vec<Option<usize>> = steps
            .iter()
            .filter(|f| f.mask)
            .map(|f| Some(f.t))
            .chain([None])
            .collect();
        for &t in &open {
            let g = p.grad_log_prob(&steps, t);
            let mut x = p.data.clone();
            let (err, _) = max_rel_error(&mut x, &g, 1e-5, 1e-6, |x| {
                let q = PolicyParams {
                    input: p.input,
                    hidden: p.hidden,
                    data: x.to_vec(),
                };
                q.log_prob(&steps, t)
            });
            worst = worst.max(err);
        }
    }
    worst
}

/// Contextual bandit: the rewarding step is the one whose first closeness
/// feature is largest. Self-critical baseline as in collection. Returns the
/// sampled selection rate after 2000 updates.
pub fn bandit_rate(seed: u64) -> f64 {
    let d = 2;
    let mut p = PolicyParams::new(feature_width(d), 16, seed);
    let mut rng = rng_for(seed, &[0xba]);
    let instance = |rng: &mut Rng| -> (Vec<StepFeatures>, usize) {
        let n = 5;
        let mut steps: Vec<StepFeatures> = (0..n)
            .map(|t| feature(t, true, rng.gen_range(0.5..1.5), rng.gen(), d))
            .collect();
        let good = rng.gen_range(0..n);
        for (t, f) in steps.iter_mut().enumerate() {
            f.closeness[0] = if t == good {
                1.0
            } else {
                rng.gen_range(-1.0..0.0)
            };
        }
        (steps, good)
    };
    for _ in 0..2000 {
        let (steps, good) = instance(&mut rng);
        let dec = p.choose(&steps, ChooseMode::Sample, &mut rng);
        let greedy = p.choose(&steps, ChooseMode::Greedy, &mut rng);
        let r = f64::from(u8::from(dec.t == Some(good)));
        let r_star = f64::from(u8::from(greedy.t == Some(good)));
        p.reinforce_update(&dec, &steps, r, r_star, 0.5).unwrap();
    }
    let trials = 500;
    let hits = (0..trials)
        .filter(|_| {
            let (steps, good) = instance(&mut rng);
            p.choose(&steps, ChooseMode::Sample, &mut rng).t == Some(good)
        })
        .count();
    hits as f64 / trials as f64
}

/// Teacher with scripted or random discrete scores, so ties are common.
pub struct Mock {
    pub rng: Rng,
    pub fixed: Option<Vec<f64>>,
    pub answer: WordId,
}

impl Teacher for Mock {
    fn answer(
        &mut self,
        _q: &Question,
        _s: &Scene,
        _l: &mut SupervisionLedger,
        _r: &mut Rng,
    ) -> askcap::error::Result<WordId> {
        Ok(self.answer)
    }

    fn score(
        &mut self,
        scene: &Scene,
        c: &[&[WordId]],
        ledger: &mut SupervisionLedger,
    ) -> askcap::error::Result<Vec<f64>> {
        ledger.charge_scoring(scene.id, c);
        Ok(match &self.fixed {
            Some(f) => f[..c.len()].to_vec(),
            None => (0..c.len())
                .map(|_| self.rng.gen_range(0..5) as f64 / 4.0)
                .collect(),
        })
    }

    fn write_caption(
        &mut self,
        _s: &Scene,
        _m: usize,
        _l: &mut SupervisionLedger,
        _r: &mut Rng,
    ) -> askcap::error::Result<Vec<Caption>> {
        unreachable!()
    }
}

pub fn policy_for(c: &Captioner) -> PolicyParams {
    PolicyParams::new(feature_width(WordEmbeddings::width(c)), 4, 3)
}

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub interactions: usize,
    pub asked: usize,
    /// Interactions breaking the max-of-three or single-charge rule.
    pub violations: Vec<String>,
}

/// `n` sampled interactions against a teacher with random tied scores.
pub fn seek_fuzz(n: u64) -> FuzzReport {
    let v = tiny_vocab();
    let scene = tiny_scene(&v);
    let cap = tiny_captioner(5);
    let policy = policy_for(&cap);
    let mut teacher = Mock {
        rng: rng_for(1, &[]),
        fixed: None,
        answer: w(&v, "cat"),
    };
    let mut rep = FuzzReport::default();
    for i in 0..n {
        let mut rng = rng_for(2, &[i]);
        let (w0, ctx) = cap
            .decode_sample_with_contexts(&scene, 1.0, &mut rng)
            .unwrap();
        let mut ledger = SupervisionLedger::new();
        let mut env = SeekEnv {
            captioner: &cap,
            vocab: &v,
            teacher: &mut teacher,
            ledger: &mut ledger,
            policy: &policy,
            strategy: AskStrategy::Random,
            questions: 1,
            human: false,
        };
        let out = seek_teacher(
            &mut env,
            &scene,
            w0.clone(),
            ctx,
            ChooseMode::Sample,
            &mut rng,
        )
        .unwrap();
        let it = &out.interaction;
        rep.interactions += 1;
        let mut bad = |why: &str| rep.violations.push(format!("interaction {i}: {why}"));
        if out.reward < it.r0 {
            bad("reward below r0");
        }
        if it.scored.len() != 1 || ledger.captions_scored > 1 {
            bad("more than one scoring event");
        }
        if !it.asked() {
            if out.caption.tokens != w0.tokens || out.reward != it.r0 {
                bad("NO_ASK did not return the first caption");
            }
            continue;
        }
        rep.asked += 1;
        let set = &it.scored[0];
        let chosen = match it.branch {
            Branch::Original => 0,
            Branch::Rollout => 1,
            Branch::Replace => 2,
        };
        if set.len() != 3 || set[0] != w0.tokens || out.caption.tokens != set[chosen] {
            bad("returned caption is not the chosen branch");
        }
    }
    rep
}

pub fn item(scene: SceneId, tokens: Vec<WordId>, reward: f64) -> CollectedItem {
    let v = tiny_vocab();
    CollectedItem {
        round: 1,
        pass: 0,
        scene,
        caption: Caption::tagged(tokens, &v, CaptionSource::Sampled).with_reward(reward),
        reward,
        trace: Interaction {
            sampled: true,
            r0: reward,
            asks: Vec::new(),
            scored: Vec::new(),
            branch: Branch::Original,
        },
    }
}

/// Ranking written from the definition: per scene the best `m` distinct
/// captions (first seen wins a tie), scenes by mean reward, then by id.
pub fn oracle_keep(
    chunk: &[SceneId],
    buffer: &[(SceneId, u32, u8)],
    h: u32,
    m: usize,
) -> (BTreeMap<SceneId, Vec<usize>>, Vec<SceneId>) {
    let mut rows: Vec<(f64, SceneId, Vec<usize>)> = Vec::new();
    for &s in chunk {
        let mut idx: Vec<usize> = (0..buffer.len()).filter(|&i| buffer[i].0 == s).collect();
        // stable sort keeps buffer order among equal rewards
        idx.sort_by(|&a, &b| buffer[b].2.cmp(&buffer[a].2));
        let mut chosen: Vec<usize> = Vec::new();
        for i in idx {
            if chosen.len() < m && !chosen.iter().any(|&j| buffer[j].1 == buffer[i].1) {
                chosen.push(i);
            }
        }
        let score = if chosen.is_empty() {
            f64::NEG_INFINITY
        } else {
            chosen.iter().map(|&i| buffer[i].2 as f64).sum::<f64>() / chosen.len() as f64
        };
        rows.push((score, s, chosen));
    }
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let n = (chunk.len() * h as usize + 50) / 100;
    let mut kept = BTreeMap::new();
    let mut give = Vec::new();
    for (rank, (_, s, chosen)) in rows.into_iter().enumerate() {
        if rank < n && !chosen.is_empty() {
            kept.insert(s, chosen);
        } else {
            give.push(s);
        }
    }
    (kept, give)
}

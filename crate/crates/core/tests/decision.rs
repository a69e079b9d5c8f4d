mod common;

use askcap::captioner::{StepContext, TOPK};
use askcap::decision::{
    closeness_score, feature_width, featurize, heuristic_choose, AskDecision, ChooseMode,
    Heuristic, PolicyParams, WordEmbeddings,
};
use askcap::math::rng_for;
use askcap::world::{Caption, CaptionSource, Pos, Vocabulary, WordId};
use common::checks::{bandit_rate, feature, one_hot_pos, policy_grad_error, random_steps};
use common::within_sigma;
use proptest::prelude::*;
use rand::Rng;

/// Plain lookup table standing in for captioner embeddings.
struct Table {
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl WordEmbeddings for Table {
    fn embedding(&self, w: WordId) -> &[f64] {
        &self.rows[w.idx()]
    }

    fn width(&self) -> usize {
        self.d
    }
}

fn random_table(v: usize, d: usize, seed: u64) -> Table {
    let mut rng = rng_for(seed, &[1]);
    Table {
        d,
        rows: (0..v)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    }
}

fn ctx(t: usize, pos: Vec<f64>, topk: Vec<(WordId, f64)>) -> StepContext {
    let top_list = topk.iter().map(|(w, _)| *w).collect();
    StepContext {
        t,
        hidden: vec![0.0; 4],
        attention: vec![1.0],
        pos_dist: pos,
        chosen: topk[0].0,
        topk,
        top_list,
    }
}

fn random_contexts(
    rng: &mut askcap::math::Rng,
    vocab_size: usize,
    len: usize,
) -> (Vec<StepContext>, Caption) {
    let mut ctxs = Vec::new();
    let mut tokens = Vec::new();
    for t in 0..len {
        let mut pos: Vec<f64> = (0..Pos::COUNT).map(|_| rng.gen_range(0.01..1.0)).collect();
        let s: f64 = pos.iter().sum();
        pos.iter_mut().for_each(|x| *x /= s);
        let mut words: Vec<u32> = (3..vocab_size as u32).collect();
        for i in 0..TOPK {
            let j = rng.gen_range(i..words.len());
            words.swap(i, j);
        }
        let mut probs: Vec<f64> = (0..TOPK).map(|_| rng.gen_range(0.001..0.2)).collect();
        probs.sort_by(|a, b| b.total_cmp(a));
        let topk: Vec<(WordId, f64)> = words[..TOPK]
            .iter()
            .zip(&probs)
            .map(|(&w, &p)| (WordId(w), p))
            .collect();
        tokens.push(topk[0].0);
        ctxs.push(ctx(t, pos, topk));
    }
    let mut v = Vocabulary::new();
    for i in 3..vocab_size {
        v.insert(&format!("w{i}"), Pos::Noun).unwrap();
    }
    (ctxs, Caption::tagged(tokens, &v, CaptionSource::Greedy))
}

/// Straight-line recomputation of every feature from its definition.
fn oracle_features(ctx: &StepContext, caption: &Caption, e: &Table) -> Vec<f64> {
    let cos = |a: &[f64], b: &[f64]| {
        let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            ab / (na * nb)
        }
    };
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let n = caption.tokens.len() as f64;
    let mut sum = vec![0.0; e.d];
    for w in &caption.tokens {
        for (s, x) in sum.iter_mut().zip(&e.rows[w.idx()]) {
            *s += x;
        }
    }
    let total: f64 = ctx.topk.iter().map(|x| x.1).sum();
    let entropy: f64 = -ctx
        .topk
        .iter()
        .map(|x| x.1 / total)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let emb: Vec<&Vec<f64>> = ctx.topk.iter().map(|(w, _)| &e.rows[w.idx()]).collect();

    let mut out = ctx.pos_dist.clone();
    out.push(entropy);
    out.extend(emb.iter().map(|x| cos(emb[0], x)));
    out.extend(emb.iter().map(|x| cos(x, &sum)));
    for j in 0..TOPK {
        let mut best = f64::MAX;
        for i in 0..TOPK {
            if i != j {
                best = best.min(dist(emb[i], emb[j]));
            }
        }
        out.push(best);
    }
    out.extend(sum.iter().map(|s| s / n));
    out.push(ctx.t as f64 / n);
    out
}

#[test]
fn features_match_independent_recomputation() {
    let mut rng = rng_for(11, &[]);
    let table = random_table(40, 5, 3);
    let mut checked = 0;
    while checked < 100 {
        let len = rng.gen_range(1..8);
        let (ctxs, caption) = random_contexts(&mut rng, 40, len);
        let feats = featurize(&ctxs, &caption, &table);
        assert_eq!(feats.len(), len);
        for (f, c) in feats.iter().zip(&ctxs) {
            let v = f.vector();
            assert_eq!(v.len(), feature_width(5));
            let o = oracle_features(c, &caption, &table);
            for (a, b) in v.iter().zip(&o) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            checked += 1;
        }
    }
}

#[test]
fn identical_embeddings_have_unit_cosine_and_zero_distance() {
    let table = Table {
        d: 3,
        rows: vec![vec![0.5, -1.0, 2.0]; 20],
    };
    let topk: Vec<(WordId, f64)> = (3..9).map(|w| (WordId(w), 0.1)).collect();
    let c = ctx(0, one_hot_pos(Pos::Noun), topk);
    let mut v = Vocabulary::new();
    v.insert("x", Pos::Noun).unwrap();
    let caption = Caption::tagged(vec![WordId(3)], &v, CaptionSource::Greedy);
    let f = &featurize(&[c], &caption, &table)[0];
    for &x in f.top1_cosines().iter().chain(f.sentence_cosines()) {
        assert!((x - 1.0).abs() < 1e-12);
    }
    assert!(f.min_distances().iter().all(|&x| x == 0.0));
}

#[test]
fn uniform_topk_has_entropy_ln6() {
    let table = random_table(20, 4, 1);
    let topk: Vec<(WordId, f64)> = (3..9).map(|w| (WordId(w), 0.05)).collect();
    let mut v = Vocabulary::new();
    v.insert("x", Pos::Noun).unwrap();
    let caption = Caption::tagged(vec![WordId(3)], &v, CaptionSource::Greedy);
    let f = &featurize(&[ctx(0, one_hot_pos(Pos::Noun), topk)], &caption, &table)[0];
    assert!((f.entropy_topk - 6f64.ln()).abs() < 1e-12);
    assert!((f.entropy_topk - 1.791_759_469_228_055).abs() < 1e-12);
}

#[test]
fn mask_follows_predicted_pos() {
    let table = random_table(20, 4, 1);
    let topk: Vec<(WordId, f64)> = (3..9).map(|w| (WordId(w), 0.1)).collect();
    let mut v = Vocabulary::new();
    v.insert("x", Pos::Noun).unwrap();
    let caption = Caption::tagged(vec![WordId(3), WordId(3)], &v, CaptionSource::Greedy);
    let ctxs = [
        ctx(0, one_hot_pos(Pos::Other), topk.clone()),
        ctx(1, one_hot_pos(Pos::Verb), topk),
    ];
    let f = featurize(&ctxs, &caption, &table);
    assert!(!f[0].mask);
    assert!(f[1].mask);
}

#[test]
fn symmetric_two_way_softmax() {
    let d = 3;
    let p = PolicyParams::new(feature_width(d), 4, 5);
    let mut p2 = p.clone();
    let steps = vec![feature(0, true, 1.0, 1, d)];
    let logit = p.logits(&steps)[0];
    p2.set_no_ask_logit(logit);
    let dist = p2.policy_forward(&steps);
    assert!((dist[0] - 0.5).abs() < 1e-12);
    assert!((dist[1] - 0.5).abs() < 1e-12);
}

#[test]
fn all_masked_forces_no_ask() {
    let d = 3;
    let p = PolicyParams::new(feature_width(d), 4, 5);
    let steps: Vec<_> = (0..4).map(|t| feature(t, false, 1.0, 2, d)).collect();
    let dist = p.policy_forward(&steps);
    assert_eq!(&dist[..4], &[0.0; 4]);
    assert_eq!(dist[4], 1.0);
    let mut rng = rng_for(0, &[]);
    for mode in [ChooseMode::Greedy, ChooseMode::Sample] {
        assert_eq!(p.choose(&steps, mode, &mut rng).t, None);
    }
}

proptest! {
    #[test]
    fn distribution_sums_to_one_and_masks_hold(seed in 0u64..10_000, n in 1usize..12, scale in 0.1f64..20.0) {
        let d = 4;
        let mut p = PolicyParams::new(feature_width(d), 6, seed);
        p.data.iter_mut().for_each(|x| *x *= scale);
        let steps = random_steps(n, seed, d);
        let dist = p.policy_forward(&steps);
        prop_assert_eq!(dist.len(), n + 1);
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (f, &q) in steps.iter().zip(&dist) {
            if !f.mask {
                prop_assert_eq!(q, 0.0);
            }
        }
    }
}

#[test]
fn greedy_takes_argmax_lowest_index_on_ties() {
    let d = 2;
    let mut p = PolicyParams::new(feature_width(d), 3, 1);
    // zero MLP: every step logit equals b2
    p.data.iter_mut().for_each(|x| *x = 0.0);
    p.set_no_ask_logit(-5.0);
    let steps: Vec<_> = (0..3).map(|t| feature(t, true, 1.0, 3, d)).collect();
    let mut rng = rng_for(0, &[]);
    let dec = p.choose(&steps, ChooseMode::Greedy, &mut rng);
    assert_eq!(dec.t, Some(0));
    assert!(!dec.sampled);
    assert!((dec.log_prob - p.log_prob(&steps, Some(0))).abs() < 1e-12);
}

#[test]
fn sampling_frequencies_within_three_sigma() {
    let d = 3;
    let mut p = PolicyParams::new(feature_width(d), 5, 8);
    p.data.iter_mut().for_each(|x| *x *= 3.0);
    let steps = random_steps(5, 8, d);
    let dist = p.policy_forward(&steps);
    let n = 10_000;
    let mut counts = vec![0usize; dist.len()];
    let mut rng = rng_for(21, &[]);
    for _ in 0..n {
        let dec = p.choose(&steps, ChooseMode::Sample, &mut rng);
        assert!(dec.sampled);
        counts[dec.t.unwrap_or(steps.len())] += 1;
    }
    for (c, &q) in counts.iter().zip(&dist) {
        assert!(within_sigma(*c, n, q, 3.0), "count {c} vs p {q}");
    }
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    let err = policy_grad_error();
    assert!(err < 1e-4, "rel err {err:e}");
}

#[test]
fn zero_advantage_changes_nothing() {
    let d = 3;
    let mut p = PolicyParams::new(feature_width(d), 4, 2);
    let before = p.clone();
    let steps = random_steps(5, 2, d);
    let mut rng = rng_for(0, &[]);
    let dec = p.choose(&steps, ChooseMode::Sample, &mut rng);
    let delta = p.reinforce_update(&dec, &steps, 0.7, 0.7, 0.5).unwrap();
    assert!(delta.iter().all(|&x| x == 0.0));
    assert_eq!(p, before);
}

#[test]
fn positive_advantage_raises_chosen_log_prob() {
    let d = 3;
    for seed in 0..10u64 {
        let mut p = PolicyParams::new(feature_width(d), 4, seed);
        let steps = random_steps(5, seed, d);
        let mut rng = rng_for(seed, &[7]);
        let dec = p.choose(&steps, ChooseMode::Sample, &mut rng);
        let before = p.log_prob(&steps, dec.t);
        p.reinforce_update(&dec, &steps, 1.0, 0.2, 1e-3).unwrap();
        assert!(p.log_prob(&steps, dec.t) > before);
    }
}

#[test]
fn nan_advantage_aborts() {
    let d = 3;
    let mut p = PolicyParams::new(feature_width(d), 4, 1);
    let steps = random_steps(3, 1, d);
    let dec = AskDecision {
        t: None,
        log_prob: 0.0,
        sampled: true,
    };
    assert!(p
        .reinforce_update(&dec, &steps, f64::NAN, 0.0, 0.1)
        .is_err());
}

#[test]
fn bandit_converges_above_ninety_percent() {
    let mut rates: Vec<f64> = (0..5).map(bandit_rate).collect();
    rates.sort_by(f64::total_cmp);
    assert!(rates[2] > 0.9, "median selection rate {:?}", rates);
}

#[test]
fn heuristics_agree_on_single_open_step() {
    let d = 2;
    let mut steps: Vec<_> = (0..4).map(|t| feature(t, false, 1.0, 1, d)).collect();
    steps[2].mask = true;
    let mut rng = rng_for(0, &[]);
    for h in [
        Heuristic::Random,
        Heuristic::MaxEntropy,
        Heuristic::ClosenessScore,
    ] {
        assert_eq!(heuristic_choose(&steps, h, &mut rng).t, Some(2));
    }
}

#[test]
fn max_entropy_picks_unique_maximum() {
    let d = 2;
    let steps: Vec<_> = [0.3, 1.2, 0.9, 1.7, 0.2]
        .iter()
        .enumerate()
        .map(|(t, &e)| feature(t, t != 4, e, 5, d))
        .collect();
    let mut rng = rng_for(0, &[]);
    assert_eq!(
        heuristic_choose(&steps, Heuristic::MaxEntropy, &mut rng).t,
        Some(3)
    );
}

#[test]
fn closeness_heuristic_maximizes_its_score() {
    let d = 2;
    let steps = random_steps(8, 17, d);
    let mut rng = rng_for(0, &[]);
    let t = heuristic_choose(&steps, Heuristic::ClosenessScore, &mut rng)
        .t
        .unwrap();
    for f in steps.iter().filter(|f| f.mask) {
        assert!(closeness_score(&steps[t]) >= closeness_score(f));
    }
}

#[test]
fn heuristics_with_nothing_open_do_not_ask() {
    let d = 2;
    let steps: Vec<_> = (0..3).map(|t| feature(t, false, 1.0, 1, d)).collect();
    let mut rng = rng_for(0, &[]);
    for h in [
        Heuristic::Random,
        Heuristic::MaxEntropy,
        Heuristic::ClosenessScore,
    ] {
        assert_eq!(heuristic_choose(&steps, h, &mut rng).t, None);
    }
}

#[test]
fn random_heuristic_is_uniform_chi_squared() {
    let d = 2;
    let mut steps: Vec<_> = (0..6).map(|t| feature(t, true, 1.0, 1, d)).collect();
    steps[1].mask = false;
    let open = [0, 2, 3, 4, 5];
    let n = 10_000;
    let mut counts = [0usize; 6];
    let mut rng = rng_for(4, &[]);
    for _ in 0..n {
        counts[heuristic_choose(&steps, Heuristic::Random, &mut rng)
            .t
            .unwrap()] += 1;
    }
    assert_eq!(counts[1], 0);
    let expected = n as f64 / open.len() as f64;
    let chi2: f64 = open
        .iter()
        .map(|&i| (counts[i] as f64 - expected).powi(2) / expected)
        .sum();
    // 4 degrees of freedom, 0.999 quantile
    assert!(chi2 < 18.467, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn policy_checkpoint_round_trip_and_shape_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    let p = PolicyParams::new(feature_width(4), 8, 3);
    p.save(&path).unwrap();
    assert_eq!(PolicyParams::load(&path, feature_width(4), 8).unwrap(), p);
    assert!(matches!(
        PolicyParams::load(&path, feature_width(5), 8),
        Err(askcap::Error::ShapeMismatch { .. })
    ));
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{forward_step, Captioner, PosCond, SceneCache, Step};
use super::params::{Block, CaptionerParams};
use crate::error::{Error, Result};
use crate::math::{argmax, matvec_t_acc, outer_acc, rng_for, softmax};
use crate::world::{Caption, Corpus, Pos, SceneId, WordId, BOS, EOS};

/// One weighted training caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub scene: SceneId,
    pub caption: Caption,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Weight of the POS cross-entropy term.
    pub pos_weight: f64,
    /// Probability of feeding the model's own previous word: `start + step · ⌊epoch / every⌋`.
    pub ss_word_start: f64,
    pub ss_word_step: f64,
    pub ss_word_every: usize,
    pub ss_word_max: f64,
    /// Probability of conditioning on the predicted POS distribution instead of the gold tag.
    pub ss_pos_start: f64,
    pub ss_pos_step: f64,
    pub ss_pos_every: usize,
    pub ss_pos_max: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 20,
            lr: 2e-4,
            lr_decay: 0.8,
            lr_decay_every: 3,
            pos_weight: 0.5,
            ss_word_start: 0.0,
            ss_word_step: 0.05,
            ss_word_every: 5,
            ss_word_max: 0.25,
            ss_pos_start: 0.2,
            ss_pos_step: 0.05,
            ss_pos_every: 3,
            ss_pos_max: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.ss_word_start,
            self.ss_word_max,
            self.ss_pos_start,
            self.ss_pos_max,
        ];
        if self.batch_size == 0
            || self.lr.is_nan()
            || self.lr <= 0.0
            || self.lr_decay.is_nan()
            || self.lr_decay <= 0.0
            || self.pos_weight < 0.0
        {
            return Err(Error::Config(
                "batch size, lr and lr decay must be positive, pos weight nonnegative".into(),
            ));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(
                "scheduled-sampling probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.lr
            * self
                .lr_decay
                .powi((epoch / self.lr_decay_every.max(1)) as i32)
    }

    fn ss_word_at(&self, epoch: usize) -> f64 {
        (self.ss_word_start + self.ss_word_step * (epoch / self.ss_word_every.max(1)) as f64)
            .min(self.ss_word_max)
    }

    fn ss_pos_at(&self, epoch: usize) -> f64 {
        (self.ss_pos_start + self.ss_pos_step * (epoch / self.ss_pos_every.max(1)) as f64)
            .min(self.ss_pos_max)
    }
}

/// Per-step choices of the forcing schedule for one caption.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    /// Feed the model's previous argmax instead of the gold previous word.
    pub own_word: Vec<bool>,
    /// Condition on the predicted POS distribution instead of the gold tag.
    pub own_pos: Vec<bool>,
}

impl Forcing {
    /// Gold words throughout; predicted POS conditioning throughout.
    pub fn inference_like(len: usize) -> Self {
        Forcing {
            own_word: vec![false; len + 1],
            own_pos: vec![true; len + 1],
        }
    }

    pub fn teacher(len: usize) -> Self {
        Forcing {
            own_word: vec![false; len + 1],
            own_pos: vec![false; len + 1],
        }
    }

    fn sample(len: usize, p_word: f64, p_pos: f64, rng: &mut impl rand::Rng) -> Self {
        let mut own_word: Vec<bool> = (0..=len).map(|_| rng.gen_bool(p_word)).collect();
        own_word[0] = false;
        Forcing {
            own_word,
            own_pos: (0..=len).map(|_| rng.gen_bool(p_pos)).collect(),
        }
    }
}

/// Loss `weight·(−log p(caption)) + pos_weight·(−log p(tags))` of one caption,
/// end token included. Accumulates the gradient into `grad` when given.
pub fn caption_loss(
    p: &CaptionerParams,
    feats: Vec<Vec<usize>>,
    caption: &Caption,
    weight: f64,
    pos_weight: f64,
    forcing: &Forcing,
    grad: Option<&mut [f64]>,
) -> f64 {
    let sc = SceneCache::new(p, feats);
    let d = p.dims().hidden;
    let targets: Vec<(WordId, Pos)> = caption
        .tokens
        .iter()
        .copied()
        .zip(caption.pos.iter().copied())
        .chain(std::iter::once((EOS, Pos::Other)))
        .collect();

    let mut steps: Vec<Step> = Vec::with_capacity(targets.len());
    let mut probs_all: Vec<Vec<f64>> = Vec::with_capacity(targets.len());
    let mut h = vec![0.0; d];
    let mut loss = 0.0;
    for (t, &(w, tag)) in targets.iter().enumerate() {
        let input = if t == 0 {
            BOS
        } else if forcing.own_word[t] {
            WordId(argmax(&steps[t - 1].logits) as u32)
        } else {
            targets[t - 1].0
        };
        let cond = if forcing.own_pos[t] {
            PosCond::Predicted
        } else {
            PosCond::Gold(tag)
        };
        let step = forward_step(p, &sc, &h, input, cond);
        let probs = softmax(&step.logits);
        loss += weight * -probs[w.idx()].ln() + pos_weight * -step.pos_dist[tag.index()].ln();
        h = step.h.clone();
        steps.push(step);
        probs_all.push(probs);
    }
    if let Some(g) = grad {
        backward(p, &sc, &steps, &probs_all, &targets, weight, pos_weight, g);
    }
    loss
}

#[allow(clippy::too_many_arguments)]
fn backward(
    p: &CaptionerParams,
    sc: &SceneCache,
    steps: &[Step],
    probs_all: &[Vec<f64>],
    targets: &[(WordId, Pos)],
    weight: f64,
    pos_weight: f64,
    g: &mut [f64],
) {
    let dims = *p.dims();
    let (d, f, dp) = (dims.hidden, dims.feat, dims.pos_embed);
    let r = |b: Block| p.range(b);
    let (r_ein, r_eout, r_bo, r_wh, r_wx, r_wv, r_b, r_wa, r_ua, r_wp, r_bp, r_epos, r_wc) = (
        r(Block::EmbIn),
        r(Block::EmbOut),
        r(Block::OutBias),
        r(Block::Wh),
        r(Block::Wx),
        r(Block::Wv),
        r(Block::B),
        r(Block::Wa),
        r(Block::Ua),
        r(Block::Wp),
        r(Block::Bp),
        r(Block::EPos),
        r(Block::Wc),
    );
    let mut dh_next = vec![0.0; d];
    for t in (0..steps.len()).rev() {
        let st = &steps[t];
        let (w, tag) = targets[t];

        let mut dlogits: Vec<f64> = probs_all[t].iter().map(|x| weight * x).collect();
        dlogits[w.idx()] -= weight;
        let mut dpos: Vec<f64> = st.pos_dist.iter().map(|x| pos_weight * x).collect();
        dpos[tag.index()] -= pos_weight;

        outer_acc(&mut g[r_eout.clone()], &dlogits, &st.s);
        for (gb, dl) in g[r_bo.clone()].iter_mut().zip(&dlogits) {
            *gb += dl;
        }
        let mut ds = vec![0.0; d];
        matvec_t_acc(p.block(Block::EmbOut), &dlogits, &mut ds);

        let mut dh = dh_next.clone();
        for (a, b) in dh.iter_mut().zip(&ds) {
            *a += b;
        }
        outer_acc(&mut g[r_wc.clone()], &ds, &st.c);
        let mut dc = vec![0.0; dp];
        matvec_t_acc(p.block(Block::Wc), &ds, &mut dc);
        match st.cond {
            PosCond::Gold(gt) => {
                let row = gt.index() * dp;
                for (k, v) in dc.iter().enumerate() {
                    g[r_epos.start + row + k] += v;
                }
            }
            PosCond::Predicted => {
                outer_acc(&mut g[r_epos.clone()], &st.pos_dist, &dc);
                let dpi: Vec<f64> = (0..dims.pos)
                    .map(|k| crate::math::dot(p.row(Block::EPos, k), &dc))
                    .collect();
                let inner: f64 = st.pos_dist.iter().zip(&dpi).map(|(a, b)| a * b).sum();
                for k in 0..dims.pos {
                    dpos[k] += st.pos_dist[k] * (dpi[k] - inner);
                }
            }
        }
        outer_acc(&mut g[r_wp.clone()], &dpos, &st.h);
        for (gb, v) in g[r_bp.clone()].iter_mut().zip(&dpos) {
            *gb += v;
        }
        matvec_t_acc(p.block(Block::Wp), &dpos, &mut dh);

        let dpre: Vec<f64> = dh
            .iter()
            .zip(&st.h)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        outer_acc(&mut g[r_wh.clone()], &dpre, &st.h_prev);
        let e_in = p.row(Block::EmbIn, st.input.idx());
        outer_acc(&mut g[r_wx.clone()], &dpre, e_in);
        let row = st.input.idx() * d;
        let mut de = vec![0.0; d];
        matvec_t_acc(p.block(Block::Wx), &dpre, &mut de);
        for (k, v) in de.iter().enumerate() {
            g[r_ein.start + row + k] += v;
        }
        for (gb, v) in g[r_b.clone()].iter_mut().zip(&dpre) {
            *gb += v;
        }

        // attended value v = Σ α_j W_v F_j
        let dalpha: Vec<f64> = sc.val.iter().map(|v| crate::math::dot(&dpre, v)).collect();
        for (j, active) in sc.feats.iter().enumerate() {
            let a = st.alpha[j];
            for row in 0..d {
                let gv = a * dpre[row];
                for &i in active {
                    g[r_wv.start + row * f + i] += gv;
                }
            }
        }
        let inner: f64 = st.alpha.iter().zip(&dalpha).map(|(a, b)| a * b).sum();
        let ua = p.block(Block::Ua);
        let mut dh_prev = vec![0.0; d];
        matvec_t_acc(p.block(Block::Wh), &dpre, &mut dh_prev);
        for (j, active) in sc.feats.iter().enumerate() {
            let dscore = st.alpha[j] * (dalpha[j] - inner);
            if dscore == 0.0 {
                continue;
            }
            let z = &st.z[j];
            for row in 0..d {
                g[r_ua.start + row] += dscore * z[row];
                let dq = dscore * ua[row] * (1.0 - z[row] * z[row]);
                dh_prev[row] += dq;
                for &i in active {
                    g[r_wa.start + row * f + i] += dq;
                }
            }
        }
        dh_next = dh_prev;
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Per-epoch mean loss reported by [`train_mle`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

/// Retrains `model` from a fresh initialization on `items` with mini-batch Adam.
/// Items with zero weight still contribute their POS term.
pub fn train_mle(
    model: &mut Captioner,
    corpus: &Corpus,
    items: &[TrainItem],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidArgument("no training items".into()));
    }
    if let Some(bad) = items
        .iter()
        .find(|i| !(i.weight >= 0.0 && i.weight.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "item weight {} for scene {}",
            bad.weight, bad.scene
        )));
    }
    let dims = *model.dims();
    model.params = CaptionerParams::init(dims, cfg.seed);
    let feats: Vec<Vec<Vec<usize>>> = items
        .iter()
        .map(|it| {
            corpus
                .scene(it.scene)
                .map(|s| model.encoder().encode_scene(s))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown scene {}", it.scene)))
        })
        .collect::<Result<_>>()?;

    let mut rng = rng_for(cfg.seed, &[0x0074_7261_696e]);
    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let (p_word, p_pos) = (cfg.ss_word_at(epoch), cfg.ss_pos_at(epoch));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let it = &items[i];
                let forcing = Forcing::sample(it.caption.len(), p_word, p_pos, &mut rng);
                batch_loss += caption_loss(
                    &model.params,
                    feats[i].clone(),
                    &it.caption,
                    it.weight,
                    cfg.pos_weight,
                    &forcing,
                    Some(&mut grad),
                );
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss {batch_loss} at epoch {epoch}"
                )));
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut model.params.data, &grad, lr);
            total += batch_loss;
        }
        report.epoch_loss.push(total / items.len() as f64);
        tracing::debug!(epoch, loss = total / items.len() as f64, "captioner epoch");
    }
    if !model.params.is_finite() {
        return Err(Error::NonFinite("parameters after training".into()));
    }
    Ok(report)
}

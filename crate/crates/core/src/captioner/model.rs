use serde::{Deserialize, Serialize};

use super::features::ObjectEncoder;
use super::params::{Block, CaptionerParams, Dims};
use crate::error::{Error, Result};
use crate::math::{
    argmax, dot, matvec_acc, matvec_t_acc, sample_index, softmax, softmax_in_place, top_k,
};
use crate::world::{
    Caption, CaptionSource, Pos, Scene, Vocabulary, WordId, BOS, EOS, MAX_CAPTION_LEN,
};

/// Width of the top-k list kept per step.
pub const TOPK: usize = 6;
/// Longest prediction list kept for answer-novelty statistics.
pub const TOP_LIST: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub pos_embed: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 32,
            pos_embed: 8,
        }
    }
}

/// Captioner state at one decoding step. `hidden` is the state that produced
/// the distribution over the word at position `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepContext {
    pub t: usize,
    pub hidden: Vec<f64>,
    pub attention: Vec<f64>,
    pub pos_dist: Vec<f64>,
    pub topk: Vec<(WordId, f64)>,
    pub top_list: Vec<WordId>,
    pub chosen: WordId,
}

impl StepContext {
    pub fn predicted_pos(&self) -> Pos {
        Pos::from_index(argmax(&self.pos_dist))
    }

    pub fn in_top(&self, w: WordId, k: usize) -> bool {
        self.top_list.iter().take(k).any(|&x| x == w)
    }
}

/// How the word-prediction state is conditioned on POS at a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PosCond {
    Predicted,
    Gold(Pos),
}

/// Per-scene projections of the object features, computed once per scene.
pub(crate) struct SceneCache {
    pub feats: Vec<Vec<usize>>,
    /// `W_a · F_j` per object.
    pub att: Vec<Vec<f64>>,
    /// `W_v · F_j` per object.
    pub val: Vec<Vec<f64>>,
}

impl SceneCache {
    pub fn new(p: &CaptionerParams, feats: Vec<Vec<usize>>) -> Self {
        let d = p.dims().hidden;
        let f = p.dims().feat;
        let project = |b: Block, active: &[usize]| -> Vec<f64> {
            let m = p.block(b);
            (0..d)
                .map(|r| active.iter().map(|&i| m[r * f + i]).sum())
                .collect()
        };
        let att = feats.iter().map(|a| project(Block::Wa, a)).collect();
        let val = feats.iter().map(|a| project(Block::Wv, a)).collect();
        SceneCache { feats, att, val }
    }
}

/// All intermediates of one recurrent step, kept for backpropagation.
pub(crate) struct Step {
    pub input: WordId,
    pub h_prev: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub h: Vec<f64>,
    pub pos_dist: Vec<f64>,
    pub cond: PosCond,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub logits: Vec<f64>,
}

pub(crate) fn forward_step(
    p: &CaptionerParams,
    sc: &SceneCache,
    h_prev: &[f64],
    input: WordId,
    cond: PosCond,
) -> Step {
    let dims = p.dims();
    let d = dims.hidden;
    let ua = p.block(Block::Ua);
    let z: Vec<Vec<f64>> = sc
        .att
        .iter()
        .map(|a| a.iter().zip(h_prev).map(|(x, h)| (x + h).tanh()).collect())
        .collect();
    let mut alpha: Vec<f64> = z.iter().map(|zj| dot(ua, zj)).collect();
    softmax_in_place(&mut alpha);

    let mut pre = p.block(Block::B).to_vec();
    matvec_acc(p.block(Block::Wh), h_prev, &mut pre);
    matvec_acc(
        p.block(Block::Wx),
        p.row(Block::EmbIn, input.idx()),
        &mut pre,
    );
    for (a, v) in alpha.iter().zip(&sc.val) {
        for (o, x) in pre.iter_mut().zip(v) {
            *o += a * x;
        }
    }
    let h: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();

    let mut pos_dist = p.block(Block::Bp).to_vec();
    matvec_acc(p.block(Block::Wp), &h, &mut pos_dist);
    softmax_in_place(&mut pos_dist);

    let c: Vec<f64> = match cond {
        PosCond::Gold(g) => p.row(Block::EPos, g.index()).to_vec(),
        PosCond::Predicted => {
            let mut c = vec![0.0; dims.pos_embed];
            matvec_t_acc(p.block(Block::EPos), &pos_dist, &mut c);
            c
        }
    };
    let mut s = h.clone();
    matvec_acc(p.block(Block::Wc), &c, &mut s);
    debug_assert_eq!(s.len(), d);

    let mut logits = p.block(Block::OutBias).to_vec();
    matvec_acc(p.block(Block::EmbOut), &s, &mut logits);
    Step {
        input,
        h_prev: h_prev.to_vec(),
        z,
        alpha,
        h,
        pos_dist,
        cond,
        c,
        s,
        logits,
    }
}

fn context(t: usize, step: &Step, probs: &[f64], chosen: WordId) -> StepContext {
    let top = top_k(probs, TOP_LIST);
    StepContext {
        t,
        hidden: step.h.clone(),
        attention: step.alpha.clone(),
        pos_dist: step.pos_dist.clone(),
        topk: top
            .iter()
            .take(TOPK)
            .map(|&i| (WordId(i as u32), probs[i]))
            .collect(),
        top_list: top.into_iter().map(|i| WordId(i as u32)).collect(),
        chosen,
    }
}

/// Attention captioner with a per-step POS head.
#[derive(Debug, Clone)]
pub struct Captioner {
    pub params: CaptionerParams,
    encoder: ObjectEncoder,
    tags: Vec<Pos>,
}

impl Captioner {
    pub fn dims_for(vocab: &Vocabulary, encoder: &ObjectEncoder, cfg: &ModelConfig) -> Dims {
        Dims {
            vocab: vocab.len(),
            hidden: cfg.hidden,
            feat: encoder.width(),
            pos: Pos::COUNT,
            pos_embed: cfg.pos_embed,
        }
    }

    pub fn new(vocab: &Vocabulary, encoder: ObjectEncoder, cfg: &ModelConfig, seed: u64) -> Self {
        let params = CaptionerParams::init(Self::dims_for(vocab, &encoder, cfg), seed);
        Captioner {
            params,
            encoder,
            tags: vocab.entries().iter().map(|(_, p)| *p).collect(),
        }
    }

    pub fn with_params(
        vocab: &Vocabulary,
        encoder: ObjectEncoder,
        params: CaptionerParams,
    ) -> Result<Self> {
        let expected = Dims {
            hidden: params.dims().hidden,
            pos_embed: params.dims().pos_embed,
            ..Self::dims_for(vocab, &encoder, &ModelConfig::default())
        };
        if *params.dims() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected:?}"),
                found: format!("{:?}", params.dims()),
            });
        }
        Ok(Captioner {
            params,
            encoder,
            tags: vocab.entries().iter().map(|(_, p)| *p).collect(),
        })
    }

    pub fn encoder(&self) -> &ObjectEncoder {
        &self.encoder
    }

    pub fn dims(&self) -> &Dims {
        self.params.dims()
    }

    /// Output embedding of a word.
    pub fn embedding(&self, w: WordId) -> &[f64] {
        self.params.row(Block::EmbOut, w.idx())
    }

    pub(crate) fn cache(&self, scene: &Scene) -> SceneCache {
        SceneCache::new(&self.params, self.encoder.encode_scene(scene))
    }

    fn caption(&self, tokens: Vec<WordId>, source: CaptionSource) -> Caption {
        let pos = tokens.iter().map(|t| self.tags[t.idx()]).collect();
        Caption {
            tokens,
            pos,
            source,
            reward: None,
        }
    }

    /// Decodes from `h` with `input` fed first, appending to `tokens` until EOS
    /// or the length cap. Returns contexts of the appended steps.
    fn continue_decode(
        &self,
        sc: &SceneCache,
        mut h: Vec<f64>,
        mut input: WordId,
        tokens: &mut Vec<WordId>,
        mut pick: impl FnMut(&[f64]) -> usize,
    ) -> Vec<StepContext> {
        let mut ctxs = Vec::new();
        while tokens.len() < MAX_CAPTION_LEN {
            let step = forward_step(&self.params, sc, &h, input, PosCond::Predicted);
            let probs = softmax(&step.logits);
            let w = WordId(pick(&step.logits) as u32);
            if w == EOS {
                break;
            }
            ctxs.push(context(tokens.len(), &step, &probs, w));
            tokens.push(w);
            h = step.h;
            input = w;
        }
        ctxs
    }

    fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.dims().hidden]
    }

    /// Argmax decoding, lowest id on ties. One context per emitted word.
    pub fn decode_greedy(&self, scene: &Scene) -> (Caption, Vec<StepContext>) {
        let sc = self.cache(scene);
        let mut tokens = Vec::new();
        let ctxs = self.continue_decode(&sc, self.zero_state(), BOS, &mut tokens, argmax);
        (self.caption(tokens, CaptionSource::Greedy), ctxs)
    }

    /// Ancestral sampling from `softmax(logits / temperature)`.
    pub fn decode_sample(
        &self,
        scene: &Scene,
        temperature: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<Caption> {
        self.decode_sample_with_contexts(scene, temperature, rng)
            .map(|(c, _)| c)
    }

    pub fn decode_sample_with_contexts(
        &self,
        scene: &Scene,
        temperature: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<(Caption, Vec<StepContext>)> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let sc = self.cache(scene);
        let mut tokens = Vec::new();
        let ctxs = self.continue_decode(&sc, self.zero_state(), BOS, &mut tokens, |logits| {
            let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
            sample_index(&softmax(&scaled), rng)
        });
        Ok((self.caption(tokens, CaptionSource::Sampled), ctxs))
    }

    /// `prefix + answer + greedy continuation`, resuming from `hidden` (the
    /// state that predicted position `prefix.len()`). Contexts cover the
    /// continuation only, indexed by their position in the new caption.
    pub fn rollout_from(
        &self,
        scene: &Scene,
        prefix: &[WordId],
        answer: WordId,
        hidden: &[f64],
    ) -> Result<(Caption, Vec<StepContext>)> {
        if answer.idx() >= self.dims().vocab {
            return Err(Error::InvalidArgument(format!(
                "answer id {} outside vocabulary",
                answer.0
            )));
        }
        if hidden.len() != self.dims().hidden {
            return Err(Error::ShapeMismatch {
                expected: format!("hidden {}", self.dims().hidden),
                found: format!("{}", hidden.len()),
            });
        }
        if prefix.len() >= MAX_CAPTION_LEN {
            return Err(Error::InvalidArgument(
                "prefix fills the whole caption".into(),
            ));
        }
        let sc = self.cache(scene);
        let mut tokens = prefix.to_vec();
        tokens.push(answer);
        let ctxs = self.continue_decode(&sc, hidden.to_vec(), answer, &mut tokens, argmax);
        Ok((self.caption(tokens, CaptionSource::Rollout), ctxs))
    }

    /// Swaps the word at `t` for `answer`.
    pub fn replace_word(&self, caption: &Caption, t: usize, answer: WordId) -> Result<Caption> {
        if t >= caption.len() {
            return Err(Error::InvalidArgument(format!(
                "position {t} outside caption of length {}",
                caption.len()
            )));
        }
        if answer.idx() >= self.tags.len() {
            return Err(Error::InvalidArgument(format!(
                "answer id {} outside vocabulary",
                answer.0
            )));
        }
        let mut tokens = caption.tokens.clone();
        tokens[t] = answer;
        Ok(self.caption(tokens, CaptionSource::Replace))
    }

    /// Full next-word distribution after teacher-forcing `prefix`.
    pub fn step_distribution(&self, scene: &Scene, prefix: &[WordId]) -> (Vec<f64>, StepContext) {
        let sc = self.cache(scene);
        let mut h = self.zero_state();
        let mut input = BOS;
        for &w in prefix {
            h = forward_step(&self.params, &sc, &h, input, PosCond::Predicted).h;
            input = w;
        }
        let step = forward_step(&self.params, &sc, &h, input, PosCond::Predicted);
        let probs = softmax(&step.logits);
        let chosen = WordId(argmax(&probs) as u32);
        let ctx = context(prefix.len(), &step, &probs, chosen);
        (probs, ctx)
    }

    /// Contexts of a given caption under teacher forcing, one per word.
    pub fn contexts(&self, scene: &Scene, tokens: &[WordId]) -> Vec<StepContext> {
        let sc = self.cache(scene);
        let mut h = self.zero_state();
        let mut input = BOS;
        let mut out = Vec::with_capacity(tokens.len());
        for (t, &w) in tokens.iter().enumerate() {
            let step = forward_step(&self.params, &sc, &h, input, PosCond::Predicted);
            out.push(context(t, &step, &softmax(&step.logits), w));
            h = step.h;
            input = w;
        }
        out
    }

    /// Log-probability of a full caption including the end token.
    pub fn log_prob(&self, scene: &Scene, tokens: &[WordId]) -> f64 {
        let sc = self.cache(scene);
        let mut h = self.zero_state();
        let mut input = BOS;
        let mut lp = 0.0;
        for &target in tokens.iter().chain(std::iter::once(&EOS)) {
            let step = forward_step(&self.params, &sc, &h, input, PosCond::Predicted);
            lp += softmax(&step.logits)[target.idx()].ln();
            h = step.h;
            input = target;
        }
        lp
    }
}

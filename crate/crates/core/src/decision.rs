//! Decides which caption word to ask about, or whether to ask at all.
//!
//! Each step is featurized from the captioner's context: POS distribution,
//! entropy of the renormalized top-k, three closeness measures between top-k
//! word embeddings, a caption encoding and the relative position. A small MLP
//! scores every step; a learned constant scores the no-ask option; the softmax
//! runs across time.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::captioner::{Captioner, StepContext, TOPK};
use crate::error::{Error, Result};
use crate::math::{
    argmax, cosine, entropy, euclidean, rng_for, sample_index, softmax_in_place, Rng,
};
use crate::world::{Caption, Pos, WordId};

/// Source of the word vectors used by the closeness features.
pub trait WordEmbeddings {
    fn embedding(&self, w: WordId) -> &[f64];
    fn width(&self) -> usize;
}

impl WordEmbeddings for Captioner {
    fn embedding(&self, w: WordId) -> &[f64] {
        Captioner::embedding(self, w)
    }

    fn width(&self) -> usize {
        self.dims().hidden
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFeatures {
    pub t: usize,
    pub pos_dist: Vec<f64>,
    pub entropy_topk: f64,
    /// `k` cosines of the top-1 word with each top-k word, `k` cosines of each
    /// top-k word with the caption's summed embedding, and `k` distances of
    /// each top-k word to its nearest other top-k word.
    pub closeness: Vec<f64>,
    pub caption_enc: Vec<f64>,
    pub position: f64,
    pub mask: bool,
}

impl StepFeatures {
    pub fn vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(feature_width(self.caption_enc.len()));
        v.extend(&self.pos_dist);
        v.push(self.entropy_topk);
        v.extend(&self.closeness);
        v.extend(&self.caption_enc);
        v.push(self.position);
        v
    }

    pub fn top1_cosines(&self) -> &[f64] {
        &self.closeness[..TOPK]
    }

    pub fn sentence_cosines(&self) -> &[f64] {
        &self.closeness[TOPK..2 * TOPK]
    }

    pub fn min_distances(&self) -> &[f64] {
        &self.closeness[2 * TOPK..]
    }
}

/// Length of [`StepFeatures::vector`] for embedding width `d`.
pub fn feature_width(d: usize) -> usize {
    Pos::COUNT + 1 + 3 * TOPK + d + 1
}

/// Features for every step of one decoded caption.
pub fn featurize(
    contexts: &[StepContext],
    caption: &Caption,
    emb: &impl WordEmbeddings,
) -> Vec<StepFeatures> {
    let d = emb.width();
    let len = caption.len();
    let mut sentence = vec![0.0; d];
    for &w in &caption.tokens {
        for (s, x) in sentence.iter_mut().zip(emb.embedding(w)) {
            *s += x;
        }
    }
    let caption_enc: Vec<f64> = if len == 0 {
        vec![0.0; d]
    } else {
        sentence.iter().map(|x| x / len as f64).collect()
    };

    contexts
        .iter()
        .map(|ctx| {
            let mass: f64 = ctx.topk.iter().map(|(_, p)| p).sum();
            let renorm: Vec<f64> = ctx
                .topk
                .iter()
                .map(|(_, p)| if mass > 0.0 { p / mass } else { 0.0 })
                .collect();
            let vecs: Vec<&[f64]> = ctx.topk.iter().map(|(w, _)| emb.embedding(*w)).collect();
            let mut closeness = vec![0.0; 3 * TOPK];
            for j in 0..vecs.len().min(TOPK) {
                closeness[j] = cosine(vecs[0], vecs[j]);
                closeness[TOPK + j] = cosine(vecs[j], &sentence);
                closeness[2 * TOPK + j] = (0..vecs.len())
                    .filter(|&i| i != j)
                    .map(|i| euclidean(vecs[i], vecs[j]))
                    .fold(f64::INFINITY, f64::min);
                if !closeness[2 * TOPK + j].is_finite() {
                    closeness[2 * TOPK + j] = 0.0;
                }
            }
            StepFeatures {
                t: ctx.t,
                pos_dist: ctx.pos_dist.clone(),
                entropy_topk: entropy(&renorm),
                closeness,
                caption_enc: caption_enc.clone(),
                position: if len == 0 {
                    0.0
                } else {
                    ctx.t as f64 / len as f64
                },
                mask: ctx.t < len && Pos::from_index(argmax(&ctx.pos_dist)).askable(),
            }
        })
        .collect()
}

/// Outcome of one ask-or-not decision. `t == None` means no question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AskDecision {
    pub t: Option<usize>,
    pub log_prob: f64,
    pub sampled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChooseMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    Random,
    MaxEntropy,
    ClosenessScore,
}

/// Two-layer MLP producing one logit per step, plus a learned no-ask logit.
/// Layout: `W1[hidden × input]`, `b1[hidden]`, `w2[hidden]`, `b2`, `no_ask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub input: usize,
    pub hidden: usize,
    pub data: Vec<f64>,
}

const POLICY_FORMAT: &str = "askcap-policy";
const POLICY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PolicyCheckpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    params: PolicyParams,
}

struct Hidden {
    x: Vec<f64>,
    a: Vec<f64>,
}

impl PolicyParams {
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[0x706f_6c69_6379]);
        let n = hidden * input + 2 * hidden + 2;
        let mut data = vec![0.0; n];
        let s1 = 1.0 / (input as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        for x in &mut data[..hidden * input] {
            *x = rng.gen_range(-s1..s1);
        }
        for x in &mut data[hidden * input + hidden..hidden * input + 2 * hidden] {
            *x = rng.gen_range(-s2..s2);
        }
        PolicyParams {
            input,
            hidden,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn w1(&self) -> &[f64] {
        &self.data[..self.hidden * self.input]
    }

    fn b1(&self) -> &[f64] {
        let o = self.hidden * self.input;
        &self.data[o..o + self.hidden]
    }

    fn w2(&self) -> &[f64] {
        let o = self.hidden * self.input + self.hidden;
        &self.data[o..o + self.hidden]
    }

    fn b2_index(&self) -> usize {
        self.hidden * self.input + 2 * self.hidden
    }

    pub fn no_ask_logit(&self) -> f64 {
        self.data[self.b2_index() + 1]
    }

    pub fn set_no_ask_logit(&mut self, v: f64) {
        let i = self.b2_index() + 1;
        self.data[i] = v;
    }

    fn hidden_of(&self, f: &StepFeatures) -> Hidden {
        let x = f.vector();
        assert_eq!(
            x.len(),
            self.input,
            "feature width {} does not match policy input {}",
            x.len(),
            self.input
        );
        let mut a = self.b1().to_vec();
        crate::math::matvec_acc(self.w1(), &x, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        Hidden { x, a }
    }

    fn logit(&self, h: &Hidden) -> f64 {
        crate::math::dot(self.w2(), &h.a) + self.data[self.b2_index()]
    }

    /// Unnormalized scores: one per step (−∞ where masked), then no-ask.
    pub fn logits(&self, features: &[StepFeatures]) -> Vec<f64> {
        let mut out: Vec<f64> = features
            .iter()
            .map(|f| {
                if f.mask {
                    self.logit(&self.hidden_of(f))
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        out.push(self.no_ask_logit());
        out
    }

    /// Distribution over steps followed by the no-ask slot.
    pub fn policy_forward(&self, features: &[StepFeatures]) -> Vec<f64> {
        let mut p = self.logits(features);
        softmax_in_place(&mut p);
        p
    }

    pub fn choose(
        &self,
        features: &[StepFeatures],
        mode: ChooseMode,
        rng: &mut Rng,
    ) -> AskDecision {
        let p = self.policy_forward(features);
        let i = match mode {
            ChooseMode::Greedy => argmax(&p),
            ChooseMode::Sample => sample_index(&p, rng),
        };
        AskDecision {
            t: (i < features.len()).then_some(i),
            log_prob: p[i].ln(),
            sampled: mode == ChooseMode::Sample,
        }
    }

    pub fn log_prob(&self, features: &[StepFeatures], t: Option<usize>) -> f64 {
        let p = self.policy_forward(features);
        p[t.unwrap_or(features.len())].ln()
    }

    /// Gradient of `log p(t)` with respect to every parameter.
    pub fn grad_log_prob(&self, features: &[StepFeatures], t: Option<usize>) -> Vec<f64> {
        let p = self.policy_forward(features);
        let chosen = t.unwrap_or(features.len());
        let mut g = vec![0.0; self.len()];
        let (hd, inp) = (self.hidden, self.input);
        let b2 = self.b2_index();
        for (j, f) in features.iter().enumerate() {
            if !f.mask {
                continue;
            }
            // d log p(chosen) / d logit_j = [j == chosen] − p_j
            let coef = f64::from(u8::from(j == chosen)) - p[j];
            if coef == 0.0 {
                continue;
            }
            let h = self.hidden_of(f);
            let w2 = self.w2();
            for r in 0..hd {
                let da = coef * w2[r] * (1.0 - h.a[r] * h.a[r]);
                for c in 0..inp {
                    g[r * inp + c] += da * h.x[c];
                }
                g[hd * inp + r] += da;
                g[hd * inp + hd + r] += coef * h.a[r];
            }
            g[b2] += coef;
        }
        g[b2 + 1] += f64::from(u8::from(chosen == features.len())) - p[features.len()];
        g
    }

    /// `params += lr · (r − r*) · ∇ log p(t)`; returns the applied change.
    pub fn reinforce_update(
        &mut self,
        decision: &AskDecision,
        features: &[StepFeatures],
        r: f64,
        r_star: f64,
        lr: f64,
    ) -> Result<Vec<f64>> {
        let adv = r - r_star;
        if !adv.is_finite() {
            return Err(Error::NonFinite(format!("advantage {r} - {r_star}")));
        }
        if adv == 0.0 {
            return Ok(vec![0.0; self.len()]);
        }
        let g = self.grad_log_prob(features, decision.t);
        let delta: Vec<f64> = g.iter().map(|x| lr * adv * x).collect();
        if delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("policy gradient".into()));
        }
        for (p, d) in self.data.iter_mut().zip(&delta) {
            *p += d;
        }
        Ok(delta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = PolicyCheckpoint {
            format: POLICY_FORMAT.into(),
            version: POLICY_VERSION,
            params: self.clone(),
        };
        fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path, input: usize, hidden: usize) -> Result<Self> {
        let ck: PolicyCheckpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.format != POLICY_FORMAT || ck.version != POLICY_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported policy checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let p = ck.params;
        if p.input != input || p.hidden != hidden || p.data.len() != hidden * input + 2 * hidden + 2
        {
            return Err(Error::ShapeMismatch {
                expected: format!("input {input}, hidden {hidden}"),
                found: format!(
                    "input {}, hidden {}, {} values",
                    p.input,
                    p.hidden,
                    p.data.len()
                ),
            });
        }
        Ok(p)
    }
}

/// Fixed score of the closeness heuristic: high entropy, top-1 far from the
/// alternatives, alternatives spread out.
pub fn closeness_score(f: &StepFeatures) -> f64 {
    let k = TOPK as f64;
    let top1_sim = f.top1_cosines()[1..].iter().sum::<f64>() / (k - 1.0);
    let spread = f.min_distances().iter().sum::<f64>() / k;
    f.entropy_topk + (1.0 - top1_sim) + spread
}

/// Ask-step choice by a fixed rule instead of the learned policy.
pub fn heuristic_choose(
    features: &[StepFeatures],
    strategy: Heuristic,
    rng: &mut Rng,
) -> AskDecision {
    let open: Vec<usize> = features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.mask)
        .map(|(i, _)| i)
        .collect();
    let best_by = |score: &dyn Fn(&StepFeatures) -> f64| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &i in &open {
            let s = score(&features[i]);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    };
    let t = match strategy {
        Heuristic::Random => open.choose(rng).copied(),
        Heuristic::MaxEntropy => best_by(&|f| f.entropy_topk),
        Heuristic::ClosenessScore => best_by(&closeness_score),
    };
    let log_prob = match (strategy, t) {
        (Heuristic::Random, Some(_)) => -(open.len() as f64).ln(),
        _ => 0.0,
    };
    AskDecision {
        t,
        log_prob,
        sampled: strategy == Heuristic::Random,
    }
}

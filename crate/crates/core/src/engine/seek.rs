use serde::{Deserialize, Serialize};

use super::config::AskStrategy;
use crate::captioner::{Captioner, StepContext};
use crate::decision::{
    featurize, heuristic_choose, AskDecision, ChooseMode, Heuristic, PolicyParams, StepFeatures,
};
use crate::error::Result;
use crate::math::Rng;
use crate::qgen::{generate_question, Question};
use crate::teacher::{SupervisionLedger, Teacher};
use crate::world::{Caption, Pos, Scene, Vocabulary, WordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Original,
    Rollout,
    Replace,
}

/// One question put to the teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ask {
    pub step: usize,
    pub question: Question,
    pub answer: WordId,
    pub answer_pos: Pos,
    /// The captioner's ranked predictions at the asked step.
    pub top_list: Vec<WordId>,
    /// Answered by a person, so billed.
    pub human: bool,
}

/// Everything needed to replay one interaction's bill and statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub sampled: bool,
    /// Reward of the caption before any question.
    pub r0: f64,
    pub asks: Vec<Ask>,
    /// Caption sets submitted for scoring, one entry per scoring event.
    pub scored: Vec<Vec<Vec<WordId>>>,
    pub branch: Branch,
}

impl Interaction {
    pub fn asked(&self) -> bool {
        !self.asks.is_empty()
    }
}

pub struct SeekOutcome {
    pub caption: Caption,
    pub reward: f64,
    pub interaction: Interaction,
    /// Decisions taken with the features they saw, for the policy update.
    pub decisions: Vec<(AskDecision, Vec<StepFeatures>)>,
}

/// Read-mostly state shared by all interactions of a collection phase.
pub struct SeekEnv<'a, T: Teacher + ?Sized> {
    pub captioner: &'a Captioner,
    pub vocab: &'a Vocabulary,
    pub teacher: &'a mut T,
    pub ledger: &'a mut SupervisionLedger,
    pub policy: &'a PolicyParams,
    pub strategy: AskStrategy,
    pub questions: usize,
    pub human: bool,
}

fn decide(
    policy: &PolicyParams,
    strategy: AskStrategy,
    features: &[StepFeatures],
    mode: ChooseMode,
    rng: &mut Rng,
) -> AskDecision {
    let heuristic = match strategy {
        AskStrategy::Learned => return policy.choose(features, mode, rng),
        AskStrategy::Never => {
            return AskDecision {
                t: None,
                log_prob: 0.0,
                sampled: false,
            }
        }
        AskStrategy::Random => Heuristic::Random,
        AskStrategy::MaxEntropy => Heuristic::MaxEntropy,
        AskStrategy::ClosenessScore => Heuristic::ClosenessScore,
    };
    heuristic_choose(features, heuristic, rng)
}

/// Asks up to `env.questions` questions about `w0`, keeping the best of the
/// current caption, its rollout and its one-word replacement after each
/// answer. Ties keep the earlier candidate.
pub fn seek_teacher<T: Teacher + ?Sized>(
    env: &mut SeekEnv<'_, T>,
    scene: &Scene,
    w0: Caption,
    contexts: Vec<StepContext>,
    mode: ChooseMode,
    rng: &mut Rng,
) -> Result<SeekOutcome> {
    let mut best = w0;
    let mut ctx = contexts;
    let mut reward: Option<f64> = None;
    let mut interaction = Interaction {
        sampled: mode == ChooseMode::Sample,
        r0: 0.0,
        asks: Vec::new(),
        scored: Vec::new(),
        branch: Branch::Original,
    };
    let mut decisions = Vec::new();

    for n in 0..env.questions {
        let features = featurize(&ctx, &best, env.captioner);
        let decision = decide(env.policy, env.strategy, &features, mode, rng);
        decisions.push((decision, features));
        let Some(t) = decision.t else {
            break;
        };

        let question = generate_question(scene, &best, &ctx[t], env.vocab)?;
        let answer = env.teacher.answer(&question, scene, env.ledger, rng)?;
        let (rollout, _) =
            env.captioner
                .rollout_from(scene, &best.tokens[..t], answer, &ctx[t].hidden)?;
        let replace = env.captioner.replace_word(&best, t, answer)?;

        let set: [&[WordId]; 3] = [&best.tokens, &rollout.tokens, &replace.tokens];
        let scores = env.teacher.score(scene, &set, env.ledger)?;
        interaction
            .scored
            .push(set.iter().map(|c| c.to_vec()).collect());
        interaction.asks.push(Ask {
            step: t,
            question,
            answer,
            answer_pos: env.vocab.pos(answer),
            top_list: ctx[t].top_list.clone(),
            human: env.human,
        });
        let current = *reward.get_or_insert(scores[0]);
        if n == 0 {
            interaction.r0 = scores[0];
        }

        let mut pick = (Branch::Original, current);
        if scores[1] > pick.1 {
            pick = (Branch::Rollout, scores[1]);
        }
        if scores[2] > pick.1 {
            pick = (Branch::Replace, scores[2]);
        }
        reward = Some(pick.1);
        match pick.0 {
            Branch::Original => continue,
            Branch::Rollout => best = rollout,
            Branch::Replace => best = replace,
        }
        interaction.branch = pick.0;
        if n + 1 < env.questions {
            ctx = env.captioner.contexts(scene, &best.tokens);
        }
    }

    let reward = match reward {
        Some(r) => r,
        None => {
            let set: [&[WordId]; 1] = [&best.tokens];
            let r = env.teacher.score(scene, &set, env.ledger)?[0];
            interaction.scored.push(vec![best.tokens.clone()]);
            interaction.r0 = r;
            r
        }
    };
    Ok(SeekOutcome {
        caption: best.with_reward(reward),
        reward,
        interaction,
        decisions,
    })
}

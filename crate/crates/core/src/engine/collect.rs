use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::config::{AskStrategy, ExperimentConfig, StudentMode};
use super::seek::{seek_teacher, Branch, Interaction, SeekEnv};
use crate::captioner::Captioner;
use crate::decision::{ChooseMode, PolicyParams};
use crate::error::{Error, Result};
use crate::math::{rng_for, Rng};
use crate::teacher::{SupervisionLedger, Teacher, TeacherMode};
use crate::world::{Caption, Corpus, SceneId, WordId};

const TAG_COLLECT: u64 = 0x636f_6c6c;
const TAG_KEEP: u64 = 0x6b65_6570;

/// A caption gathered during collection, with the interaction behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectedItem {
    pub round: usize,
    pub pass: usize,
    pub scene: SceneId,
    pub caption: Caption,
    pub reward: f64,
    pub trace: Interaction,
}

#[derive(Debug, Default)]
pub struct CollectionReport {
    pub items: Vec<CollectedItem>,
    pub dm_updates: usize,
    /// Interactions dropped because the teacher timed out.
    pub skipped: usize,
}

pub struct CollectionEnv<'a, T: Teacher + ?Sized> {
    pub cfg: &'a ExperimentConfig,
    pub corpus: &'a Corpus,
    pub captioner: &'a Captioner,
    pub teacher: &'a mut T,
    pub ledger: &'a mut SupervisionLedger,
    pub policy: &'a mut PolicyParams,
}

fn skip_timeout<V>(r: Result<V>, report: &mut CollectionReport) -> Result<Option<V>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::TeacherTimeout(scene)) => {
            warn!(scene, "teacher timed out, skipping interaction");
            report.skipped += 1;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Runs `passes` passes over `chunk` with a frozen captioner. Inquisitive
/// students ask questions and update the policy online, mute students sample
/// and get scored. Other modes collect nothing.
pub fn collection_phase<T: Teacher + ?Sized>(
    env: &mut CollectionEnv<'_, T>,
    chunk: &[SceneId],
    round: usize,
    passes: usize,
) -> Result<CollectionReport> {
    let mut report = CollectionReport::default();
    for &id in chunk {
        if env.corpus.scene(id).is_none() {
            return Err(Error::InvalidArgument(format!(
                "chunk scene {id} not in corpus"
            )));
        }
    }
    match env.cfg.mode {
        StudentMode::Inquisitive => collect_inquisitive(env, chunk, round, passes, &mut report)?,
        StudentMode::Mute => collect_mute(env, chunk, round, passes, &mut report)?,
        StudentMode::EqualGt | StudentMode::AllGt => {}
    }
    Ok(report)
}

fn collect_inquisitive<T: Teacher + ?Sized>(
    env: &mut CollectionEnv<'_, T>,
    chunk: &[SceneId],
    round: usize,
    passes: usize,
    report: &mut CollectionReport,
) -> Result<()> {
    let cfg = env.cfg;
    let human = cfg.teacher.mode == TeacherMode::Human;
    for pass in 0..passes {
        for &id in chunk {
            let scene = env.corpus.scene(id).expect("checked above");
            let mut rng: Rng = rng_for(cfg.seed, &[TAG_COLLECT, round as u64, pass as u64, id]);
            let (w0, ctx) = env.captioner.decode_sample_with_contexts(
                scene,
                cfg.jitter_temperature,
                &mut rng,
            )?;
            let mut seek = SeekEnv {
                captioner: env.captioner,
                vocab: &env.corpus.vocab,
                teacher: &mut *env.teacher,
                ledger: &mut *env.ledger,
                policy: &*env.policy,
                strategy: cfg.ask_strategy,
                questions: cfg.questions,
                human,
            };
            let Some(sampled) = skip_timeout(
                seek_teacher(&mut seek, scene, w0, ctx, ChooseMode::Sample, &mut rng),
                report,
            )?
            else {
                continue;
            };
            let (g0, gctx) = env.captioner.decode_greedy(scene);
            let Some(greedy) = skip_timeout(
                seek_teacher(&mut seek, scene, g0, gctx, ChooseMode::Greedy, &mut rng),
                report,
            )?
            else {
                continue;
            };

            if cfg.ask_strategy == AskStrategy::Learned {
                for (decision, features) in &sampled.decisions {
                    env.policy.reinforce_update(
                        decision,
                        features,
                        sampled.reward,
                        greedy.reward,
                        cfg.policy.lr,
                    )?;
                }
                report.dm_updates += 1;
            }
            for o in [sampled, greedy] {
                report.items.push(CollectedItem {
                    round,
                    pass,
                    scene: id,
                    caption: o.caption,
                    reward: o.reward,
                    trace: o.interaction,
                });
            }
        }
    }
    Ok(())
}

fn collect_mute<T: Teacher + ?Sized>(
    env: &mut CollectionEnv<'_, T>,
    chunk: &[SceneId],
    round: usize,
    passes: usize,
    report: &mut CollectionReport,
) -> Result<()> {
    let cfg = env.cfg;
    for pass in 0..passes {
        for &id in chunk {
            let scene = env.corpus.scene(id).expect("checked above");
            let mut rng = rng_for(cfg.seed, &[TAG_COLLECT, round as u64, pass as u64, id]);
            let sampled = env
                .captioner
                .decode_sample(scene, cfg.mute_temperature, &mut rng)?;
            let (greedy, _) = env.captioner.decode_greedy(scene);
            for (caption, is_sampled) in [(sampled, true), (greedy, false)] {
                let set: [&[WordId]; 1] = [&caption.tokens];
                let Some(scores) =
                    skip_timeout(env.teacher.score(scene, &set, env.ledger), report)?
                else {
                    continue;
                };
                let r = scores[0];
                let trace = Interaction {
                    sampled: is_sampled,
                    r0: r,
                    asks: Vec::new(),
                    scored: vec![vec![caption.tokens.clone()]],
                    branch: Branch::Original,
                };
                report.items.push(CollectedItem {
                    round,
                    pass,
                    scene: id,
                    caption: caption.with_reward(r),
                    reward: r,
                    trace,
                });
            }
        }
    }
    Ok(())
}

/// Outcome of ranking a chunk: scenes whose collected captions are kept (with
/// indices into the buffer) and scenes handed back to the teacher.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeepPlan {
    pub kept: BTreeMap<SceneId, Vec<usize>>,
    pub give_up: Vec<SceneId>,
    /// Ranking key per scene, the mean of its top-m distinct rewards.
    pub scene_score: BTreeMap<SceneId, f64>,
}

/// Number of scenes kept out of `n` at `keep_percent`, rounding half up.
pub fn kept_count(n: usize, keep_percent: u32) -> usize {
    (n * keep_percent as usize + 50) / 100
}

/// Top-m distinct captions per scene by reward (earlier buffer entries win
/// ties), scenes ranked by the mean of those rewards, then by id.
pub fn plan_keep(
    chunk: &[SceneId],
    buffer: &[CollectedItem],
    keep_percent: u32,
    m: usize,
) -> KeepPlan {
    let mut per_scene: BTreeMap<SceneId, Vec<usize>> =
        chunk.iter().map(|&s| (s, Vec::new())).collect();
    for (i, item) in buffer.iter().enumerate() {
        if let Some(v) = per_scene.get_mut(&item.scene) {
            v.push(i);
        }
    }
    let mut top: BTreeMap<SceneId, Vec<usize>> = BTreeMap::new();
    let mut score = BTreeMap::new();
    for (&scene, idx) in &mut per_scene {
        idx.sort_by(|&a, &b| {
            buffer[b]
                .reward
                .total_cmp(&buffer[a].reward)
                .then(a.cmp(&b))
        });
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for &i in idx.iter() {
            if chosen.len() == m {
                break;
            }
            if chosen
                .iter()
                .all(|&j| buffer[j].caption.tokens != buffer[i].caption.tokens)
            {
                chosen.push(i);
            }
        }
        let s = if chosen.is_empty() {
            f64::NEG_INFINITY
        } else {
            chosen.iter().map(|&i| buffer[i].reward).sum::<f64>() / chosen.len() as f64
        };
        score.insert(scene, s);
        top.insert(scene, chosen);
    }
    let mut order: Vec<SceneId> = per_scene.keys().copied().collect();
    order.sort_by(|a, b| score[b].total_cmp(&score[a]).then(a.cmp(b)));

    let n_keep = kept_count(order.len(), keep_percent);
    let mut plan = KeepPlan {
        scene_score: score,
        ..KeepPlan::default()
    };
    for (rank, scene) in order.into_iter().enumerate() {
        let chosen = top.remove(&scene).unwrap_or_default();
        if rank < n_keep && !chosen.is_empty() {
            plan.kept.insert(scene, chosen);
        } else {
            plan.give_up.push(scene);
        }
    }
    plan
}

/// Training additions from one chunk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeepResult {
    pub collected: Vec<(SceneId, Caption)>,
    pub written: Vec<(SceneId, Vec<Caption>)>,
}

/// Applies [`plan_keep`] and buys `m` reference captions for every give-up.
#[allow(clippy::too_many_arguments)]
pub fn keep_best_and_give_up<T: Teacher + ?Sized>(
    corpus: &Corpus,
    chunk: &[SceneId],
    buffer: &[CollectedItem],
    keep_percent: u32,
    m: usize,
    teacher: &mut T,
    ledger: &mut SupervisionLedger,
    seed: u64,
    round: usize,
) -> Result<KeepResult> {
    let plan = plan_keep(chunk, buffer, keep_percent, m);
    let mut out = KeepResult::default();
    for idx in plan.kept.values() {
        for &i in idx {
            out.collected
                .push((buffer[i].scene, buffer[i].caption.clone()));
        }
    }
    for &scene_id in &plan.give_up {
        let scene = corpus
            .scene(scene_id)
            .ok_or_else(|| Error::InvalidArgument(format!("scene {scene_id} not in corpus")))?;
        let mut rng = rng_for(seed, &[TAG_KEEP, round as u64, scene_id]);
        out.written
            .push((scene_id, teacher.write_caption(scene, m, ledger, &mut rng)?));
    }
    Ok(out)
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::collect::{collection_phase, keep_best_and_give_up, kept_count, CollectionEnv};
use super::config::{ExperimentConfig, StudentMode};
use super::stats::{
    buffer_stats, evaluate, write_results, write_trace, RoundStats, TraceRecord, WriteReason,
};
use crate::captioner::{train_mle, Captioner, Checkpoint, ObjectEncoder, TrainItem};
use crate::decision::{feature_width, PolicyParams, WordEmbeddings};
use crate::error::{Error, Result};
use crate::math::{nearest_rank, rng_for};
use crate::metrics::RefPool;
use crate::teacher::{HumanTeacher, SupervisionLedger, SyntheticTeacher, TaskQueue, Teacher};
use crate::world::{
    generate_world, load_corpus, split_chunks, Caption, ChunkPlan, Corpus, SceneId, GT_PER_SCENE,
};

const TAG_TRAIN: u64 = 0x0074_7261_696e;
const TAG_POLICY: u64 = 0x0070_6f6c;
const TAG_BASELINE: u64 = 0x6261_7365;

const STATE_FORMAT: &str = "askcap-run";
const STATE_VERSION: u32 = 1;

pub const STATE_FILE: &str = "state.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Where teacher traffic goes.
#[derive(Clone, Default)]
pub enum TeacherBackend {
    #[default]
    Synthetic,
    Human(Arc<TaskQueue>),
}

/// Everything needed to continue a run after its last finished round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunState {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    /// Rounds completed; round 0 is the warmup.
    pub rounds_done: usize,
    pub captioner: Checkpoint,
    pub policy: PolicyParams,
    pub ledger: SupervisionLedger,
    pub dataset: Vec<(SceneId, Caption)>,
    pub lambda: f64,
    pub stats: Vec<RoundStats>,
    pub trace: Vec<TraceRecord>,
}

impl RunState {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: RunState = serde_json::from_slice(&fs::read(path)?)?;
        if s.format != STATE_FORMAT || s.version != STATE_VERSION {
            return Err(Error::Config(format!(
                "unsupported run state {} v{}",
                s.format, s.version
            )));
        }
        Ok(s)
    }
}

pub struct RunOutput {
    pub captioner: Captioner,
    pub policy: PolicyParams,
    pub stats: Vec<RoundStats>,
    pub ledger: SupervisionLedger,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for state, trace, results and per-round checkpoints.
    pub out: Option<PathBuf>,
    /// Continue from `out/state.json` if present.
    pub resume: bool,
    /// Stop with [`Error::Halted`] once this round is checkpointed.
    pub halt_after: Option<usize>,
}

/// Loads or generates the corpus named by the config.
pub fn corpus_for(cfg: &ExperimentConfig) -> Result<Corpus> {
    match &cfg.corpus_dir {
        Some(dir) => load_corpus(dir),
        None => generate_world(&cfg.world),
    }
}

/// A lifetime experiment bound to its corpus and scene splits.
pub struct Lifetime<'a> {
    pub cfg: ExperimentConfig,
    pub corpus: &'a Corpus,
    pub plan: ChunkPlan,
    pub test: Vec<SceneId>,
    train_pool: RefPool,
    eval_pool: RefPool,
}

impl<'a> Lifetime<'a> {
    pub fn new(cfg: ExperimentConfig, corpus: &'a Corpus) -> Result<Self> {
        cfg.validate()?;
        let mut ids = corpus.scene_ids();
        ids.sort_unstable();
        if cfg.test_scenes == 0 || cfg.test_scenes >= ids.len() {
            return Err(Error::Config(format!(
                "cannot hold out {} of {} scenes",
                cfg.test_scenes,
                ids.len()
            )));
        }
        let test = ids.split_off(ids.len() - cfg.test_scenes);
        let mut plan = split_chunks(&ids, cfg.warmup_fraction, cfg.chunks, cfg.seed)?;
        plan.m = cfg.m;
        plan.gt_per_warmup_scene = GT_PER_SCENE;
        let train_pool = RefPool::new(corpus, &ids);
        let eval_pool = RefPool::new(corpus, &test);
        Ok(Lifetime {
            cfg,
            corpus,
            plan,
            test,
            train_pool,
            eval_pool,
        })
    }

    /// Pool the synthetic teacher scores against (training scenes only).
    pub fn train_pool(&self) -> &RefPool {
        &self.train_pool
    }

    pub fn eval_pool(&self) -> &RefPool {
        &self.eval_pool
    }

    pub fn new_captioner(&self) -> Captioner {
        Captioner::new(
            &self.corpus.vocab,
            ObjectEncoder::for_corpus(self.corpus),
            &self.cfg.model,
            self.cfg.seed,
        )
    }

    fn new_policy(&self, captioner: &Captioner) -> PolicyParams {
        let seed = rng_for(self.cfg.seed, &[TAG_POLICY]).next_u64();
        PolicyParams::new(
            feature_width(WordEmbeddings::width(captioner)),
            self.cfg.policy.hidden,
            seed,
        )
    }

    /// Retrains from scratch on `dataset`, GT captions weighted `lambda` and
    /// collected ones by their reward over the reward scale.
    pub fn update_phase(
        &self,
        dataset: &[(SceneId, Caption)],
        lambda: f64,
        round: usize,
    ) -> Result<Captioner> {
        let scale = self.cfg.teacher.weights.max_score();
        let items: Vec<TrainItem> = dataset
            .iter()
            .map(|(scene, c)| {
                let weight = match c.reward {
                    Some(r) => r / scale,
                    None => lambda,
                };
                TrainItem {
                    scene: *scene,
                    caption: c.clone(),
                    weight,
                }
            })
            .collect();
        let mut train = self.cfg.train.clone();
        train.seed = rng_for(self.cfg.seed, &[TAG_TRAIN, round as u64]).next_u64();
        let mut model = self.new_captioner();
        train_mle(&mut model, self.corpus, &items, &train)?;
        Ok(model)
    }

    fn make_teacher<'t>(&'t self, backend: &TeacherBackend) -> Box<dyn Teacher + 't> {
        match backend {
            TeacherBackend::Synthetic => Box::new(SyntheticTeacher::new(
                self.corpus,
                &self.train_pool,
                &self.cfg.teacher,
            )),
            TeacherBackend::Human(queue) => Box::new(HumanTeacher::new(
                Arc::clone(queue),
                &self.corpus.vocab,
                &self.cfg.teacher.weights,
                Duration::from_secs(self.cfg.teacher.human_timeout_secs),
            )),
        }
    }

    fn round_stats(
        &self,
        round: usize,
        trace: &[TraceRecord],
        ledger: &SupervisionLedger,
        lambda: f64,
        eval: super::EvalStats,
    ) -> RoundStats {
        let items = trace.iter().filter_map(|r| match r {
            TraceRecord::Collected(i) if i.round == round => Some(i),
            _ => None,
        });
        let b = buffer_stats(items, self.cfg.mode);
        let written = trace
            .iter()
            .map(|r| match r {
                TraceRecord::Written { count, .. } => *count,
                _ => 0,
            })
            .sum();
        RoundStats {
            round,
            mode: self.cfg.mode,
            seed: self.cfg.seed,
            eval,
            supervision_total: ledger.total(),
            gt_captions_used: written,
            atop3: b.atop[0],
            atop5: b.atop[1],
            atop10: b.atop[2],
            improved_pct: b.improved_pct,
            mean_collected_reward: b.mean_reward,
            questions: b.questions,
            answer_pos: b.answer_pos,
            lambda,
        }
    }

    fn checkpoint(&self, state: &RunState, out: &Path) -> Result<()> {
        let dir = out.join(CHECKPOINT_DIR);
        fs::create_dir_all(&dir)?;
        let r = state.rounds_done - 1;
        fs::write(
            dir.join(format!("round{r}.captioner.json")),
            serde_json::to_vec(&state.captioner)?,
        )?;
        state
            .policy
            .save(&dir.join(format!("round{r}.policy.json")))?;
        write_trace(&out.join(TRACE_FILE), &state.trace)?;
        write_results(&out.join(RESULTS_FILE), &state.stats)?;
        state.save(&out.join(STATE_FILE))
    }

    /// Warmup, then for each chunk: collect, keep or give up, retrain, evaluate.
    pub fn run(&self, backend: &TeacherBackend, opts: &RunOptions) -> Result<RunOutput> {
        let cfg = &self.cfg;
        let vocab = &self.corpus.vocab;
        let encoder = ObjectEncoder::for_corpus(self.corpus);
        if let Some(out) = &opts.out {
            fs::create_dir_all(out)?;
        }

        let resumed = match &opts.out {
            Some(out) if opts.resume && out.join(STATE_FILE).exists() => {
                let s = RunState::load(&out.join(STATE_FILE))?;
                if &s.config != cfg {
                    return Err(Error::Config(
                        "resume state was written by a different configuration".into(),
                    ));
                }
                Some(s)
            }
            _ => None,
        };

        let mut teacher = self.make_teacher(backend);
        let mut state = match resumed {
            Some(s) => {
                info!(rounds_done = s.rounds_done, "resuming");
                s
            }
            None => {
                let mut ledger = SupervisionLedger::new();
                let mut trace = Vec::new();
                let mut dataset = Vec::new();
                for &id in &self.plan.warmup {
                    let refs = self.corpus.refs(id);
                    ledger.charge_written(refs.len());
                    trace.push(TraceRecord::Written {
                        round: 0,
                        scene: id,
                        count: refs.len(),
                        reason: WriteReason::Warmup,
                    });
                    dataset.extend(refs.iter().map(|c| (id, c.clone())));
                }
                let captioner = self.update_phase(&dataset, 1.0, 0)?;
                let policy = self.new_policy(&captioner);
                let eval = evaluate(
                    &captioner,
                    self.corpus,
                    &self.eval_pool,
                    &self.test,
                    &cfg.teacher.weights,
                )?;
                trace.push(TraceRecord::Round {
                    round: 0,
                    lambda: 1.0,
                    eval,
                });
                let stats = vec![self.round_stats(0, &trace, &ledger, 1.0, eval)];
                info!(round = 0, mix = eval.mix, "warmup done");
                let s = RunState {
                    format: STATE_FORMAT.into(),
                    version: STATE_VERSION,
                    config: cfg.clone(),
                    rounds_done: 1,
                    captioner: captioner.params.to_checkpoint(),
                    policy,
                    ledger,
                    dataset,
                    lambda: 1.0,
                    stats,
                    trace,
                };
                if let Some(out) = &opts.out {
                    self.checkpoint(&s, out)?;
                }
                if opts.halt_after == Some(0) {
                    return Err(Error::Halted(0));
                }
                s
            }
        };

        let dims = Captioner::dims_for(vocab, &encoder, &cfg.model);
        let mut captioner = Captioner::with_params(
            vocab,
            encoder.clone(),
            crate::captioner::CaptionerParams::from_checkpoint(state.captioner.clone(), &dims)?,
        )?;

        for round in state.rounds_done..=cfg.chunks {
            let chunk = &self.plan.chunks[round - 1];
            let mut additions: Vec<(SceneId, Caption)> = Vec::new();
            match cfg.mode {
                StudentMode::Inquisitive | StudentMode::Mute => {
                    let report = {
                        let mut env = CollectionEnv {
                            cfg,
                            corpus: self.corpus,
                            captioner: &captioner,
                            teacher: teacher.as_mut(),
                            ledger: &mut state.ledger,
                            policy: &mut state.policy,
                        };
                        collection_phase(&mut env, chunk, round, cfg.passes())?
                    };
                    let kept = keep_best_and_give_up(
                        self.corpus,
                        chunk,
                        &report.items,
                        cfg.keep_percent,
                        cfg.m,
                        teacher.as_mut(),
                        &mut state.ledger,
                        cfg.seed,
                        round,
                    )?;
                    state
                        .trace
                        .extend(report.items.into_iter().map(TraceRecord::Collected));
                    for (scene, caps) in &kept.written {
                        state.trace.push(TraceRecord::Written {
                            round,
                            scene: *scene,
                            count: caps.len(),
                            reason: WriteReason::GiveUp,
                        });
                        additions.extend(caps.iter().map(|c| (*scene, c.clone())));
                    }
                    additions.extend(kept.collected);
                }
                StudentMode::EqualGt | StudentMode::AllGt => {
                    let mut scenes = chunk.clone();
                    if cfg.mode == StudentMode::EqualGt {
                        scenes.shuffle(&mut rng_for(cfg.seed, &[TAG_BASELINE, round as u64]));
                        scenes.truncate(chunk.len() - kept_count(chunk.len(), cfg.keep_percent));
                        scenes.sort_unstable();
                    }
                    for id in scenes {
                        let scene = self.corpus.scene(id).ok_or_else(|| {
                            Error::InvalidArgument(format!("scene {id} not in corpus"))
                        })?;
                        let mut rng = rng_for(cfg.seed, &[TAG_BASELINE, round as u64, id]);
                        let caps =
                            teacher.write_caption(scene, cfg.m, &mut state.ledger, &mut rng)?;
                        state.trace.push(TraceRecord::Written {
                            round,
                            scene: id,
                            count: caps.len(),
                            reason: WriteReason::Baseline,
                        });
                        additions.extend(caps.into_iter().map(|c| (id, c)));
                    }
                }
            }
            state.dataset.extend(additions);

            if matches!(cfg.mode, StudentMode::Inquisitive | StudentMode::Mute) {
                let rewards: Vec<f64> =
                    state.dataset.iter().filter_map(|(_, c)| c.reward).collect();
                if let Some(q) = nearest_rank(&rewards, 0.9) {
                    state.lambda = q / cfg.teacher.weights.max_score();
                }
            }
            captioner = self.update_phase(&state.dataset, state.lambda, round)?;
            let eval = evaluate(
                &captioner,
                self.corpus,
                &self.eval_pool,
                &self.test,
                &cfg.teacher.weights,
            )?;
            state.trace.push(TraceRecord::Round {
                round,
                lambda: state.lambda,
                eval,
            });
            let stats = self.round_stats(round, &state.trace, &state.ledger, state.lambda, eval);
            info!(
                round,
                mix = eval.mix,
                supervision = stats.supervision_total,
                "round done"
            );
            state.stats.push(stats);
            state.captioner = captioner.params.to_checkpoint();
            state.rounds_done = round + 1;
            if let Some(out) = &opts.out {
                self.checkpoint(&state, out)?;
            }
            if opts.halt_after == Some(round) && round < cfg.chunks {
                return Err(Error::Halted(round));
            }
        }

        Ok(RunOutput {
            captioner,
            policy: state.policy,
            stats: state.stats,
            ledger: state.ledger,
            trace: state.trace,
        })
    }
}

/// In-memory run with the synthetic teacher.
pub fn run_lifetime(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<RunOutput> {
    Lifetime::new(cfg.clone(), corpus)?.run(&TeacherBackend::Synthetic, &RunOptions::default())
}

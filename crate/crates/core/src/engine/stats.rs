use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::collect::CollectedItem;
use super::config::StudentMode;
use crate::captioner::Captioner;
use crate::error::{Error, Result};
use crate::metrics::{MixWeights, RefPool};
use crate::teacher::SupervisionLedger;
use crate::world::{Corpus, Pos, SceneId, UNK};

/// Greedy-decoded quality on the held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalStats {
    pub mix: f64,
    pub cider: f64,
    pub bleu4: f64,
    pub rouge: f64,
    pub meteor: f64,
    pub uniq_nouns: usize,
    pub uniq_verbs: usize,
    pub uniq_adjs: usize,
}

pub fn evaluate(
    captioner: &Captioner,
    corpus: &Corpus,
    pool: &RefPool,
    scenes: &[SceneId],
    weights: &MixWeights,
) -> Result<EvalStats> {
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation split".into()));
    }
    let mut out = EvalStats::default();
    let mut used: [BTreeSet<u32>; 3] = Default::default();
    for &id in scenes {
        let scene = corpus
            .scene(id)
            .ok_or_else(|| Error::InvalidArgument(format!("eval scene {id} not in corpus")))?;
        let (caption, _) = captioner.decode_greedy(scene);
        let m = pool.metrics(id, &caption.tokens, &corpus.vocab);
        out.mix += m.mix(weights);
        out.cider += m.cider;
        out.bleu4 += m.bleu[3];
        out.rouge += m.rouge_l;
        out.meteor += m.meteor;
        for (&w, &p) in caption.tokens.iter().zip(&caption.pos) {
            let slot = match p {
                Pos::Noun => 0,
                Pos::Verb => 1,
                Pos::Adj => 2,
                _ => continue,
            };
            used[slot].insert(w.0);
        }
    }
    let n = scenes.len() as f64;
    for v in [
        &mut out.mix,
        &mut out.cider,
        &mut out.bleu4,
        &mut out.rouge,
        &mut out.meteor,
    ] {
        *v /= n;
    }
    [out.uniq_nouns, out.uniq_verbs, out.uniq_adjs] = [used[0].len(), used[1].len(), used[2].len()];
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteReason {
    Warmup,
    GiveUp,
    Baseline,
}

/// One line of the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Collected(CollectedItem),
    Written {
        round: usize,
        scene: SceneId,
        count: usize,
        reason: WriteReason,
    },
    /// Closes a round: evaluation after its update phase.
    Round {
        round: usize,
        lambda: f64,
        eval: EvalStats,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub mode: StudentMode,
    pub seed: u64,
    pub eval: EvalStats,
    pub supervision_total: f64,
    pub gt_captions_used: usize,
    /// Percentages over answered questions; `None` when nothing was answered.
    pub atop3: Option<f64>,
    pub atop5: Option<f64>,
    pub atop10: Option<f64>,
    /// Percentage of inquisitive interactions that ended above their starting reward.
    pub improved_pct: Option<f64>,
    pub mean_collected_reward: Option<f64>,
    pub questions: usize,
    pub answer_pos: BTreeMap<Pos, usize>,
    pub lambda: f64,
}

/// Question and improvement statistics of one round's buffer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BufferStats {
    pub atop: [Option<f64>; 3],
    pub improved_pct: Option<f64>,
    pub mean_reward: Option<f64>,
    pub questions: usize,
    pub answer_pos: BTreeMap<Pos, usize>,
}

pub const ATOP_K: [usize; 3] = [3, 5, 10];

pub fn buffer_stats<'a>(
    items: impl IntoIterator<Item = &'a CollectedItem>,
    mode: StudentMode,
) -> BufferStats {
    let mut out = BufferStats::default();
    let mut hits = [0usize; 3];
    let mut answered = 0usize;
    let (mut n, mut improved, mut reward_sum) = (0usize, 0usize, 0.0);
    for item in items {
        n += 1;
        reward_sum += item.reward;
        if item.reward > item.trace.r0 {
            improved += 1;
        }
        for ask in &item.trace.asks {
            out.questions += 1;
            *out.answer_pos.entry(ask.answer_pos).or_insert(0) += 1;
            if ask.answer == UNK {
                continue;
            }
            answered += 1;
            for (h, k) in hits.iter_mut().zip(ATOP_K) {
                if ask.top_list.iter().take(k).any(|&w| w == ask.answer) {
                    *h += 1;
                }
            }
        }
    }
    if answered > 0 {
        out.atop = hits.map(|h| Some(100.0 * h as f64 / answered as f64));
    }
    if n > 0 {
        out.mean_reward = Some(reward_sum / n as f64);
        if mode == StudentMode::Inquisitive {
            out.improved_pct = Some(100.0 * improved as f64 / n as f64);
        }
    }
    out
}

/// Bills a trace against a fresh ledger and rebuilds every round's statistics.
pub fn replay(
    records: &[TraceRecord],
    mode: StudentMode,
    seed: u64,
) -> Result<(SupervisionLedger, Vec<RoundStats>)> {
    let mut ledger = SupervisionLedger::new();
    let mut stats = Vec::new();
    let mut written = 0usize;
    let mut pending: Vec<&CollectedItem> = Vec::new();
    for rec in records {
        match rec {
            TraceRecord::Collected(item) => {
                for set in &item.trace.scored {
                    let refs: Vec<&[_]> = set.iter().map(Vec::as_slice).collect();
                    ledger.charge_scoring(item.scene, &refs);
                }
                for ask in item.trace.asks.iter().filter(|a| a.human) {
                    ledger.charge_answer(item.scene, &ask.question.render());
                }
                pending.push(item);
            }
            TraceRecord::Written { count, .. } => {
                ledger.charge_written(*count);
                written += count;
            }
            TraceRecord::Round {
                round,
                lambda,
                eval,
            } => {
                if pending.iter().any(|i| i.round != *round) {
                    return Err(Error::InvalidArgument(format!(
                        "trace mixes rounds before the close of round {round}"
                    )));
                }
                let b = buffer_stats(pending.drain(..), mode);
                stats.push(RoundStats {
                    round: *round,
                    mode,
                    seed,
                    eval: *eval,
                    supervision_total: ledger.total(),
                    gt_captions_used: written,
                    atop3: b.atop[0],
                    atop5: b.atop[1],
                    atop10: b.atop[2],
                    improved_pct: b.improved_pct,
                    mean_collected_reward: b.mean_reward,
                    questions: b.questions,
                    answer_pos: b.answer_pos,
                    lambda: *lambda,
                });
            }
        }
    }
    Ok((ledger, stats))
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub const RESULT_COLUMNS: [&str; 17] = [
    "round",
    "mode",
    "seed",
    "mix",
    "cider",
    "bleu4",
    "rouge",
    "meteor",
    "supervision_total",
    "gt_captions_used",
    "atop3",
    "atop5",
    "atop10",
    "improved_pct",
    "uniq_nouns",
    "uniq_verbs",
    "uniq_adjs",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn result_row(s: &RoundStats) -> [String; 17] {
    [
        s.round.to_string(),
        s.mode.as_str().to_string(),
        s.seed.to_string(),
        s.eval.mix.to_string(),
        s.eval.cider.to_string(),
        s.eval.bleu4.to_string(),
        s.eval.rouge.to_string(),
        s.eval.meteor.to_string(),
        s.supervision_total.to_string(),
        s.gt_captions_used.to_string(),
        opt(s.atop3),
        opt(s.atop5),
        opt(s.atop10),
        opt(s.improved_pct),
        s.eval.uniq_nouns.to_string(),
        s.eval.uniq_verbs.to_string(),
        s.eval.uniq_adjs.to_string(),
    ]
}

pub fn write_results(path: &Path, stats: &[RoundStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    for s in stats {
        w.write_record(result_row(s))?;
    }
    w.flush()?;
    Ok(())
}

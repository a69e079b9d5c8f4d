//! Lifetime learning: warmup, collection by asking, keep-or-give-up, and
//! retraining from scratch, plus the mute and ground-truth baselines.

mod collect;
mod config;
mod run;
mod seek;
mod stats;

pub use collect::{
    collection_phase, keep_best_and_give_up, kept_count, plan_keep, CollectedItem, CollectionEnv,
    CollectionReport, KeepPlan, KeepResult,
};
pub use config::{AskStrategy, ExperimentConfig, PolicyConfig, StudentMode, KEEP_PERCENT_GRID};
pub use run::{
    corpus_for, run_lifetime, Lifetime, RunOptions, RunOutput, RunState, TeacherBackend,
    CHECKPOINT_DIR, RESULTS_FILE, STATE_FILE, TRACE_FILE,
};
pub use seek::{seek_teacher, Ask, Branch, Interaction, SeekEnv, SeekOutcome};
pub use stats::{
    buffer_stats, evaluate, read_trace, replay, result_row, write_results, write_trace,
    BufferStats, EvalStats, RoundStats, TraceRecord, WriteReason, ATOP_K, RESULT_COLUMNS,
};

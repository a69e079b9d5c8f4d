//! `run`: one lifetime experiment per seed, each in its own directory with a
//! manifest that ties the result rows to the exact configuration.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use askcap::engine::{
    corpus_for, ExperimentConfig, Lifetime, RunOptions, StudentMode, TeacherBackend,
    CHECKPOINT_DIR, RESULTS_FILE, STATE_FILE, TRACE_FILE,
};
use askcap::error::Error;
use askcap::teacher::{TaskQueue, TeacherMode};
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::{server, Failure};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "askcap-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub results: String,
    pub trace: String,
    pub state: String,
}

/// Written next to every run's results; paths are relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub code_version: String,
    pub mode: StudentMode,
    pub seed: u64,
    pub world_seed: u64,
    pub config: ExperimentConfig,
    pub outputs: OutputPaths,
    pub checkpoints: Vec<String>,
    pub completed: bool,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }

    fn save(&self, path: &Path) -> Result<(), Failure> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Failure::Runtime(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// Parses `7`, `1,3,5` or the inclusive range `1..5`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| format!("bad seed {s:?}"))
    };
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty seed range {text}"));
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(num).collect()
}

pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub mode: Option<StudentMode>,
    pub seeds: Option<Vec<u64>>,
    pub out: PathBuf,
    pub resume: bool,
    pub serve_teacher: Option<SocketAddr>,
    pub halt_after: Option<usize>,
}

pub fn run_dir(out: &Path, mode: StudentMode, seed: u64) -> PathBuf {
    out.join(mode.as_str()).join(format!("seed{seed}"))
}

fn checkpoint_list(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir.join(CHECKPOINT_DIR))
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| format!("{CHECKPOINT_DIR}/{}", e.file_name().to_string_lossy()))
        .collect();
    v.sort();
    v
}

/// Runs every requested seed in turn and returns the run directories.
pub fn run(args: &RunArgs) -> Result<Vec<PathBuf>, Failure> {
    let mut base = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("{}: {io}", p.display())),
            e => e.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = args.mode {
        base.mode = m;
    }
    if args.serve_teacher.is_some() {
        base.teacher.mode = TeacherMode::Human;
    }
    let seeds = args.seeds.clone().unwrap_or_else(|| vec![base.seed]);

    let queue = TaskQueue::new();
    let server = match (args.serve_teacher, base.teacher.mode) {
        (Some(addr), _) => {
            let h = server::spawn(addr, Arc::clone(&queue))
                .map_err(|e| Failure::Runtime(format!("cannot serve on {addr}: {e}")))?;
            info!(addr = %h.addr, "teacher endpoint up");
            Some(h)
        }
        (None, TeacherMode::Human) => {
            return Err(Failure::Usage(
                "a human teacher needs --serve-teacher".into(),
            ))
        }
        (None, TeacherMode::Synthetic) => None,
    };
    let backend = match server {
        Some(_) => TeacherBackend::Human(Arc::clone(&queue)),
        None => TeacherBackend::Synthetic,
    };

    let corpus = corpus_for(&base)?;
    let mut dirs = Vec::new();
    for seed in seeds {
        let cfg = ExperimentConfig {
            seed,
            ..base.clone()
        };
        let dir = run_dir(&args.out, cfg.mode, seed);
        fs::create_dir_all(&dir)?;
        let mut manifest = RunManifest {
            format: MANIFEST_FORMAT.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            mode: cfg.mode,
            seed,
            world_seed: cfg.world.seed,
            config: cfg.clone(),
            outputs: OutputPaths {
                results: RESULTS_FILE.into(),
                trace: TRACE_FILE.into(),
                state: STATE_FILE.into(),
            },
            checkpoints: checkpoint_list(&dir),
            completed: false,
        };
        manifest.save(&dir.join(MANIFEST_FILE))?;
        info!(mode = cfg.mode.as_str(), seed, dir = %dir.display(), "run start");
        let life = Lifetime::new(cfg, &corpus)?;
        let opts = RunOptions {
            out: Some(dir.clone()),
            resume: args.resume,
            halt_after: args.halt_after,
        };
        let result = life.run(&backend, &opts);
        manifest.checkpoints = checkpoint_list(&dir);
        manifest.completed = result.is_ok();
        manifest.save(&dir.join(MANIFEST_FILE))?;
        result?;
        dirs.push(dir);
    }
    if let Some(s) = server {
        s.stop()?;
    }
    Ok(dirs)
}

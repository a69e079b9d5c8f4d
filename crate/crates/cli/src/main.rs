use std::io::IsTerminal;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use askcap::engine::{ExperimentConfig, StudentMode};
use askcap::metrics::MixWeights;
use askcap::world::{generate_world, save_corpus};
use askcap_cli::report::{aggregate, collect_runs, write_charts, write_report};
use askcap_cli::runner::{parse_seeds, run, RunArgs};
use askcap_cli::score::{format_score, load_weights, parse_batch, score_pairs, Metric, Pair};
use askcap_cli::{Failure, OUT_ENV};
use clap::{Parser, Subcommand, ValueEnum};
use tracing::info;

#[derive(Parser)]
#[command(
    name = "askcap",
    version,
    about = "Captioning agents that learn by asking a teacher"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene corpus.
    GenWorld {
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config whose world section is the starting point.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run lifetime experiments, one per seed.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// inquisitive (is), mute (ms), equal_gt or all_gt.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<StudentMode>,
        /// `7`, `1,3,5` or `1..5`.
        #[arg(long, value_parser = parse_seed_list)]
        seed: Option<Seeds>,
        #[arg(long, env = OUT_ENV, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
        /// Serve teacher tasks over HTTP and wait for a human to answer them.
        #[arg(long, value_name = "ADDR")]
        serve_teacher: Option<SocketAddr>,
        /// Stop after this many completed rounds (for testing resume).
        #[arg(long, hide = true)]
        halt_after: Option<usize>,
    },
    /// Score candidate captions against references.
    Score {
        #[arg(long, conflicts_with = "batch", requires = "refs")]
        candidate: Option<String>,
        #[arg(long, num_args = 1.., conflicts_with = "batch")]
        refs: Vec<String>,
        /// Lines of `candidate<TAB>ref|ref`.
        #[arg(long, required_unless_present = "candidate")]
        batch: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mix")]
        metric: MetricArg,
        /// TOML file with Mix weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Aggregate finished runs into a CSV of medians and IQRs.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG charts into this directory.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Bleu1,
    Bleu2,
    Bleu3,
    Bleu4,
    Rouge,
    Meteor,
    Cider,
    Mix,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Bleu1 => Metric::Bleu1,
            MetricArg::Bleu2 => Metric::Bleu2,
            MetricArg::Bleu3 => Metric::Bleu3,
            MetricArg::Bleu4 => Metric::Bleu4,
            MetricArg::Rouge => Metric::Rouge,
            MetricArg::Meteor => Metric::Meteor,
            MetricArg::Cider => Metric::Cider,
            MetricArg::Mix => Metric::Mix,
        }
    }
}

fn parse_mode(s: &str) -> Result<StudentMode, String> {
    s.parse().map_err(|e: askcap::Error| e.to_string())
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_seed_list(s: &str) -> Result<Seeds, String> {
    parse_seeds(s).map(Seeds)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::GenWorld {
            scenes,
            seed,
            out,
            config,
        } => {
            let mut world = match config {
                Some(p) => ExperimentConfig::load(&p)?.world,
                None => ExperimentConfig::default().world,
            };
            if let Some(n) = scenes {
                world.num_scenes = n;
            }
            if let Some(s) = seed {
                world.seed = s;
            }
            let corpus = generate_world(&world)?;
            save_corpus(&corpus, &out)?;
            info!(scenes = corpus.scenes.len(), dir = %out.display(), "world written");
        }
        Command::Run {
            config,
            mode,
            seed,
            out,
            resume,
            serve_teacher,
            halt_after,
        } => {
            let dirs = run(&RunArgs {
                config,
                mode,
                seeds: seed.map(|s| s.0),
                out,
                resume,
                serve_teacher,
                halt_after,
            })?;
            for d in dirs {
                println!("{}", d.display());
            }
        }
        Command::Score {
            candidate,
            refs,
            batch,
            metric,
            weights,
        } => {
            let weights = match weights {
                Some(p) => load_weights(&p)?,
                None => MixWeights::default(),
            };
            let pairs = match (candidate, batch) {
                (Some(c), _) => vec![Pair { candidate: c, refs }],
                (None, Some(p)) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                    parse_batch(&text)?
                }
                (None, None) => return Err(Failure::Usage("need --candidate or --batch".into())),
            };
            let mut out = String::new();
            for s in score_pairs(&pairs, metric.into(), &weights)? {
                out.push_str(&format_score(s));
                out.push('\n');
            }
            print!("{out}");
        }
        Command::Report { traces, out, svg } => {
            let runs = collect_runs(&traces)?;
            let rows = aggregate(&runs);
            write_report(&out, &rows)?;
            info!(runs = runs.len(), rows = rows.len(), "report written");
            if let Some(dir) = svg {
                write_charts(&dir, &rows)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_max_level(tracing::Level::INFO)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

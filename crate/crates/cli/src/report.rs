//! `report`: replays every run's trace found under a directory and writes
//! per-(mode, round) medians and interquartile ranges across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use askcap::engine::{read_trace, replay, RoundStats, StudentMode};
use askcap::math::{median, quantile_linear};
use tracing::warn;
use walkdir::WalkDir;

use crate::runner::{RunManifest, MANIFEST_FILE};
use crate::Failure;

pub const REPORT_METRICS: [&str; 10] = [
    "mix",
    "cider",
    "bleu4",
    "rouge",
    "meteor",
    "supervision_total",
    "gt_captions_used",
    "atop5",
    "improved_pct",
    "lambda",
];

pub fn metric(s: &RoundStats, name: &str) -> Option<f64> {
    Some(match name {
        "mix" => s.eval.mix,
        "cider" => s.eval.cider,
        "bleu4" => s.eval.bleu4,
        "rouge" => s.eval.rouge,
        "meteor" => s.eval.meteor,
        "supervision_total" => s.supervision_total,
        "gt_captions_used" => s.gt_captions_used as f64,
        "atop5" => return s.atop5,
        "improved_pct" => return s.improved_pct,
        "lambda" => s.lambda,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub mode: StudentMode,
    pub seed: u64,
    pub stats: Vec<RoundStats>,
}

/// Every directory below `root` holding a manifest and a trace, with its
/// statistics rebuilt from the trace alone.
pub fn collect_runs(root: &Path) -> Result<Vec<RunRecord>, Failure> {
    if !root.is_dir() {
        return Err(Failure::Usage(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Failure::Runtime(e.to_string()))?;
        if entry.file_name() != MANIFEST_FILE {
            continue;
        }
        let dir = entry.path().parent().unwrap_or(root).to_path_buf();
        let manifest = RunManifest::load(entry.path())?;
        let trace = dir.join(&manifest.outputs.trace);
        if !trace.exists() {
            warn!(dir = %dir.display(), "manifest without a trace, skipped");
            continue;
        }
        let records = read_trace(&trace)?;
        let (_, stats) = replay(&records, manifest.mode, manifest.seed)?;
        out.push(RunRecord {
            dir,
            mode: manifest.mode,
            seed: manifest.seed,
            stats,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub median: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mode: StudentMode,
    pub round: usize,
    pub runs: usize,
    /// Aligned with [`REPORT_METRICS`]; `None` when no run has the value.
    pub values: Vec<Option<Spread>>,
}

pub fn spread(v: &[f64]) -> Option<Spread> {
    Some(Spread {
        median: median(v)?,
        iqr: quantile_linear(v, 0.75)? - quantile_linear(v, 0.25)?,
    })
}

pub fn aggregate(runs: &[RunRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(&'static str, usize), (StudentMode, Vec<&RoundStats>)> =
        BTreeMap::new();
    for r in runs {
        for s in &r.stats {
            groups
                .entry((r.mode.as_str(), s.round))
                .or_insert_with(|| (r.mode, Vec::new()))
                .1
                .push(s);
        }
    }
    groups
        .into_iter()
        .map(|((_, round), (mode, stats))| {
            let values = REPORT_METRICS
                .iter()
                .map(|m| {
                    let v: Vec<f64> = stats.iter().filter_map(|s| metric(s, m)).collect();
                    spread(&v)
                })
                .collect();
            ReportRow {
                mode,
                round,
                runs: stats.len(),
                values,
            }
        })
        .collect()
}

pub fn header() -> Vec<String> {
    let mut h = vec!["mode".to_string(), "round".into(), "runs".into()];
    for m in REPORT_METRICS {
        h.push(format!("{m}_median"));
        h.push(format!("{m}_iqr"));
    }
    h
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<(), Failure> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    let err = |e: csv::Error| Failure::Runtime(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header()).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.mode.as_str().to_string(),
            r.round.to_string(),
            r.runs.to_string(),
        ];
        for v in &r.values {
            match v {
                Some(s) => rec.extend([s.median.to_string(), s.iqr.to_string()]),
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(rec).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line chart of median `y` against median `x`, one line per mode.
fn line_chart(
    rows: &[ReportRow],
    x: Option<usize>,
    y: usize,
    x_label: &str,
    y_label: &str,
) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let point = |r: &ReportRow| -> Option<(f64, f64)> {
        let xv = match x {
            Some(i) => r.values[i]?.median,
            None => r.round as f64,
        };
        Some((xv, r.values[y]?.median))
    };
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(point).collect();
    let lo = |f: fn(&(f64, f64)) -> f64| pts.iter().map(f).fold(f64::INFINITY, f64::min);
    let hi = |f: fn(&(f64, f64)) -> f64| pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1, y0, y1) = (lo(|p| p.0), hi(|p| p.0), lo(|p| p.1), hi(|p| p.1));
    let sx = |v: f64| pad + (v - x0) / (x1 - x0).max(1e-9) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - y0) / (y1 - y0).max(1e-9) * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    let _ = write!(
        svg,
        r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = write!(
        svg,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = write!(
        svg,
        r#"<text x="{pad}" y="{}">{x0:.1}</text><text x="{}" y="{}" text-anchor="end">{x1:.1}</text>"#,
        h - pad + 16.0,
        w - pad,
        h - pad + 16.0
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{y0:.1}</text><text x="{}" y="{}" text-anchor="end">{y1:.1}</text>"#,
        pad - 4.0,
        h - pad,
        pad - 4.0,
        pad + 4.0
    );

    let mut modes: Vec<StudentMode> = rows.iter().map(|r| r.mode).collect();
    modes.dedup();
    for (i, mode) in modes.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line: Vec<String> = rows
            .iter()
            .filter(|r| r.mode == *mode)
            .filter_map(point)
            .map(|(a, b)| format!("{:.1},{:.1}", sx(a), sy(b)))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            line.join(" ")
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad - 90.0,
            pad + 16.0 * i as f64,
            mode.as_str()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `mix_by_round.svg` and `mix_by_supervision.svg` into `dir`.
pub fn write_charts(dir: &Path, rows: &[ReportRow]) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(dir)?;
    let idx = |m: &str| {
        REPORT_METRICS
            .iter()
            .position(|x| *x == m)
            .expect("known metric")
    };
    let mix = idx("mix");
    let charts = [
        (
            "mix_by_round.svg",
            line_chart(rows, None, mix, "round", "Mix (median)"),
        ),
        (
            "mix_by_supervision.svg",
            line_chart(
                rows,
                Some(idx("supervision_total")),
                mix,
                "supervision",
                "Mix (median)",
            ),
        ),
    ];
    let mut out = Vec::new();
    for (name, svg) in charts {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        out.push(p);
    }
    Ok(out)
}

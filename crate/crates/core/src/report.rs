//! Report files of a pipeline run and their schema checks.
//!
//! `run.json` holds the run log, `score.json` the pipeline scores and costs,
//! `matrix_<metric>.csv` the per-model per-interval scores and
//! `composite_<variant>.csv` the composite-model series. Every file parses
//! back into its typed form and re-renders to the same content.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{CompositeVariant, EvaluationInterval, IntervalSpec};
use crate::supervisor::{Costs, PipelineOutcome, PipelineRun, RunStatus};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("{0}: unknown report file name")]
    UnknownKind(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub metric: String,
    pub variant: CompositeVariant,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub pipeline: String,
    pub status: RunStatus,
    pub eval_fingerprint: Option<String>,
    pub intervals: Option<IntervalSpec>,
    pub scores: Vec<ScoreEntry>,
    pub costs: Costs,
}

impl ScoreReport {
    pub fn score(&self, metric: &str, variant: CompositeVariant) -> Option<f64> {
        self.scores.iter().find(|s| s.metric == metric && s.variant == variant).and_then(|s| s.score)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

fn parse_cell(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
    }
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad integer {s:?}"))
}

/// `matrix_<metric>.csv`: one row per model, one column per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCsv {
    /// `(start, end)` of each interval.
    pub intervals: Vec<(i64, i64)>,
    /// `(model id, t_end, scores)`.
    pub rows: Vec<(u64, i64, Vec<Option<f64>>)>,
}

impl MatrixCsv {
    pub fn render(&self) -> String {
        let mut out = String::from("model_id,t_end");
        for (s, e) in &self.intervals {
            out.push_str(&format!(",{s}..{e}"));
        }
        out.push('\n');
        for (id, t_end, cells) in &self.rows {
            out.push_str(&format!("{id},{t_end}"));
            for c in cells {
                out.push(',');
                out.push_str(&cell(*c));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
        if header.len() < 2 || header[0] != "model_id" || header[1] != "t_end" {
            return Err("header must start with model_id,t_end".into());
        }
        let intervals = header[2..]
            .iter()
            .map(|h| {
                let (s, e) = h.split_once("..").ok_or_else(|| format!("bad interval column {h:?}"))?;
                Ok((parse_int(s)?, parse_int(e)?))
            })
            .collect::<Result<Vec<_>, String>>()?;
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != header.len() {
                    return Err(format!("row {}: {} fields, header has {}", i + 1, f.len(), header.len()));
                }
                let cells = f[2..].iter().map(|c| parse_cell(c)).collect::<Result<_, _>>()?;
                Ok((parse_int(f[0])?, parse_int(f[1])?, cells))
            })
            .collect::<Result<_, String>>()?;
        Ok(Self { intervals, rows })
    }
}

/// `composite_<variant>.csv`: per interval, the mapped model and its score
/// under every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeCsv {
    pub metrics: Vec<String>,
    /// `(interval, model, scores per metric)`.
    pub rows: Vec<(EvaluationInterval, Option<usize>, Vec<Option<f64>>)>,
}

impl CompositeCsv {
    pub fn render(&self) -> String {
        let mut out = String::from("start,anchor,end,closed,model");
        for m in &self.metrics {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (iv, model, scores) in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}",
                iv.start,
                iv.anchor,
                iv.end,
                iv.closed,
                model.map_or(String::new(), |m| m.to_string())
            ));
            for s in scores {
                out.push(',');
                out.push_str(&cell(*s));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').collect();
        if header.len() < 5 || header[..5] != ["start", "anchor", "end", "closed", "model"] {
            return Err("header must start with start,anchor,end,closed,model".into());
        }
        let metrics = header[5..].iter().map(|s| s.to_string()).collect();
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != header.len() {
                    return Err(format!("row {}: {} fields, header has {}", i + 1, f.len(), header.len()));
                }
                let iv = EvaluationInterval {
                    start: parse_int(f[0])?,
                    anchor: parse_int(f[1])?,
                    end: parse_int(f[2])?,
                    closed: f[3].parse().map_err(|_| format!("bad flag {:?}", f[3]))?,
                };
                let model = if f[4].is_empty() { None } else { Some(parse_int(f[4])?) };
                let scores = f[5..].iter().map(|c| parse_cell(c)).collect::<Result<_, _>>()?;
                Ok((iv, model, scores))
            })
            .collect::<Result<_, String>>()?;
        Ok(Self { metrics, rows })
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn score_report(outcome: &PipelineOutcome) -> ScoreReport {
    let scores = outcome
        .eval
        .as_ref()
        .map(|e| {
            e.composites
                .iter()
                .map(|c| ScoreEntry { metric: c.metric.clone(), variant: c.variant, score: c.score })
                .collect()
        })
        .unwrap_or_default();
    ScoreReport {
        pipeline: outcome.run.pipeline.clone(),
        status: outcome.run.status,
        eval_fingerprint: outcome.eval.as_ref().map(|e| e.eval_fingerprint.clone()),
        intervals: outcome.eval.as_ref().map(|e| e.intervals_spec.clone()),
        scores,
        costs: outcome.run.costs.clone(),
    }
}

/// Rendered report files, by file name.
pub fn render_reports(outcome: &PipelineOutcome) -> Vec<(String, String)> {
    let mut files = vec![("run.json".to_string(), json(&outcome.run))];
    if let Some(eval) = &outcome.eval {
        let intervals: Vec<(i64, i64)> = eval.intervals.iter().map(|iv| (iv.start, iv.end)).collect();
        for m in &eval.matrices {
            let rows = outcome
                .run
                .models
                .iter()
                .zip(&m.cells)
                .map(|(rec, cells)| (rec.id, rec.t_end, cells.clone()))
                .collect();
            let csv = MatrixCsv { intervals: intervals.clone(), rows };
            files.push((format!("matrix_{}.csv", m.metric.id()), csv.render()));
        }
        for variant in [CompositeVariant::CurrentlyActive, CompositeVariant::CurrentlyTrained] {
            let per_metric: Vec<_> = eval.composites.iter().filter(|c| c.variant == variant).collect();
            let Some(first) = per_metric.first() else { continue };
            let rows = eval
                .intervals
                .iter()
                .enumerate()
                .map(|(j, iv)| (*iv, first.mapping[j], per_metric.iter().map(|c| c.series[j]).collect()))
                .collect();
            let csv = CompositeCsv { metrics: per_metric.iter().map(|c| c.metric.clone()).collect(), rows };
            files.push((format!("composite_{}.csv", variant.id()), csv.render()));
        }
    }
    files.push(("score.json".to_string(), json(&score_report(outcome))));
    files
}

pub fn write_reports(outcome: &PipelineOutcome, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io { path: out_dir.to_path_buf(), source })?;
    render_reports(outcome)
        .into_iter()
        .map(|(name, body)| {
            let path = out_dir.join(name);
            fs::write(&path, body).map_err(|source| ReportError::Io { path: path.clone(), source })?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Run,
    Score,
    Matrix,
    Composite,
}

fn round_trip<T: Serialize + for<'de> Deserialize<'de>>(text: &str) -> Result<(), String> {
    let typed: T = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let original: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let again = serde_json::to_value(&typed).map_err(|e| e.to_string())?;
    if again != original {
        return Err("content does not survive a parse/serialize round trip".into());
    }
    Ok(())
}

/// Parses a report file according to its name and checks that it re-renders
/// to the same content.
pub fn check_report(path: &Path) -> Result<ReportKind, ReportError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    let schema = |reason: String| ReportError::Schema { path: path.to_path_buf(), reason };
    let kind = if name == "run.json" {
        round_trip::<PipelineRun>(&text).map_err(schema)?;
        ReportKind::Run
    } else if name == "score.json" {
        round_trip::<ScoreReport>(&text).map_err(schema)?;
        ReportKind::Score
    } else if name.starts_with("matrix_") && name.ends_with(".csv") {
        let m = MatrixCsv::parse(&text).map_err(schema)?;
        if m.render() != text {
            return Err(schema("content does not re-render identically".into()));
        }
        ReportKind::Matrix
    } else if name.starts_with("composite_") && name.ends_with(".csv") {
        let c = CompositeCsv::parse(&text).map_err(schema)?;
        if c.render() != text {
            return Err(schema("content does not re-render identically".into()));
        }
        ReportKind::Composite
    } else {
        return Err(ReportError::UnknownKind(path.to_path_buf()));
    };
    Ok(kind)
}

pub fn read_score(path: &Path) -> Result<ScoreReport, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| ReportError::Schema { path: path.to_path_buf(), reason: e.to_string() })
}

//! Alignment report rendering and plot-ready data.
//!
//! A report is a set of (model, dataset) cells. Each cell yields one metric
//! row plus three plot tables: a `(c_v, c_i)` scatter, a histogram of
//! calibration error over `[-100, 100]`, and histograms of both confidences
//! over `[0, 100]`. All bins are 5 points wide; the last bin is closed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::confidence::ConfidenceRecord;
use crate::error::MetricError;
use crate::io::write_atomic;
use crate::metrics::{evaluate_cell, AlignmentRow, PValueMethod};

pub const BIN_WIDTH: f64 = 5.0;
pub const MEAN_LABEL: &str = "Mean";
const MISSING: &str = "–";

#[derive(Debug, Clone)]
pub struct CellInput {
    pub model: String,
    pub dataset: String,
    pub records: Vec<ConfidenceRecord>,
}

/// Fixed-width histogram over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, width: f64) -> Self {
        let bins = ((hi - lo) / width).round() as usize;
        Self {
            lo,
            width,
            counts: vec![0; bins],
        }
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * self.counts.len() as f64
    }

    /// Bins are `[lo + k*w, lo + (k+1)*w)` except the last, which also takes
    /// `hi`. Out-of-range values are clamped into the edge bins.
    pub fn add(&mut self, x: f64) {
        let last = self.counts.len() - 1;
        let k = ((x - self.lo) / self.width).floor();
        let idx = if k < 0.0 { 0 } else { (k as usize).min(last) };
        self.counts[idx] += 1;
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let lo = self.lo + self.width * k as f64;
        (lo, lo + self.width)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub question_id: String,
    pub c_v: f64,
    pub c_i: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub scatter: Vec<ScatterPoint>,
    pub epsilon: Histogram,
    pub verbal: Histogram,
    pub internal: Histogram,
}

impl PlotData {
    pub fn from_records(records: &[ConfidenceRecord]) -> Self {
        let mut plot = Self {
            scatter: Vec::new(),
            epsilon: Histogram::new(-100.0, 100.0, BIN_WIDTH),
            verbal: Histogram::new(0.0, 100.0, BIN_WIDTH),
            internal: Histogram::new(0.0, 100.0, BIN_WIDTH),
        };
        for r in records {
            if let Some((c_v, c_i)) = r.confidences() {
                plot.scatter.push(ScatterPoint {
                    question_id: r.question_id.clone(),
                    c_v,
                    c_i,
                });
                plot.epsilon.add(c_v - c_i);
                plot.verbal.add(c_v);
                plot.internal.add(c_i);
            }
        }
        plot
    }
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub model: String,
    pub dataset: String,
    pub row: Result<AlignmentRow, MetricError>,
    pub plots: PlotData,
}

/// Unweighted mean of one model's successful rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub model: String,
    pub datasets: usize,
    pub rho: f64,
    pub sigma_eps: f64,
    pub mean_abs_eps: f64,
    pub sem: f64,
    pub accuracy: f64,
    pub failure_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub cells: Vec<CellReport>,
    pub means: Vec<MeanRow>,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

impl Report {
    /// Evaluates every cell independently; a failing cell is kept with its
    /// error and does not affect the others.
    pub fn build(cells: &[CellInput], method: &dyn PValueMethod) -> Self {
        let cells: Vec<CellReport> = cells
            .par_iter()
            .map(|c| CellReport {
                model: c.model.clone(),
                dataset: c.dataset.clone(),
                row: evaluate_cell(&c.model, &c.dataset, &c.records, method),
                plots: PlotData::from_records(&c.records),
            })
            .collect();
        Self::from_cells(cells)
    }

    pub fn from_rows(rows: Vec<AlignmentRow>) -> Self {
        let cells = rows
            .into_iter()
            .map(|row| CellReport {
                model: row.model.clone(),
                dataset: row.dataset.clone(),
                plots: PlotData::from_records(&[]),
                row: Ok(row),
            })
            .collect();
        Self::from_cells(cells)
    }

    fn from_cells(cells: Vec<CellReport>) -> Self {
        let models: Vec<String> = first_seen(cells.iter().map(|c| c.model.as_str()))
            .into_iter()
            .map(String::from)
            .collect();
        let means = models
            .into_iter()
            .filter_map(|model| {
                let rows: Vec<&AlignmentRow> = cells
                    .iter()
                    .filter_map(|c| c.row.as_ref().ok())
                    .filter(|r| r.model == model)
                    .collect();
                if rows.is_empty() {
                    return None;
                }
                Some(MeanRow {
                    datasets: rows.len(),
                    rho: mean(rows.iter().map(|r| r.rho)),
                    sigma_eps: mean(rows.iter().map(|r| r.stats.sigma_eps)),
                    mean_abs_eps: mean(rows.iter().map(|r| r.stats.mean_abs_eps)),
                    sem: mean(rows.iter().map(|r| r.stats.sem)),
                    accuracy: mean(rows.iter().map(|r| r.accuracy)),
                    failure_rate: mean(rows.iter().map(|r| r.failure_rate)),
                    model,
                })
            })
            .collect();
        Self { cells, means }
    }

    pub fn rows(&self) -> impl Iterator<Item = &AlignmentRow> {
        self.cells.iter().filter_map(|c| c.row.as_ref().ok())
    }

    pub fn errors(&self) -> impl Iterator<Item = (&CellReport, &MetricError)> {
        self.cells.iter().filter_map(|c| c.row.as_ref().err().map(|e| (c, e)))
    }

    fn models(&self) -> Vec<&str> {
        first_seen(self.cells.iter().map(|c| c.model.as_str()))
    }

    fn datasets(&self) -> Vec<&str> {
        first_seen(self.rows().map(|r| r.dataset.as_str()))
    }

    /// Long table (one line per cell, then the model's mean line) followed by
    /// a wide table with one column group per dataset.
    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        md.push_str("# Confidence alignment report\n\n");
        md.push_str("| Model | Dataset | ρ | p | σ_ε | mean\\|ε\\| | σ_M | Accuracy (%) | Failure rate (%) | n |\n");
        md.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for model in self.models() {
            for row in self.rows().filter(|r| r.model == model) {
                let _ = writeln!(
                    md,
                    "| {} | {} | {:.2} | {:.2e} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {} |",
                    row.model,
                    row.dataset,
                    row.rho,
                    row.p_value,
                    row.stats.sigma_eps,
                    row.stats.mean_abs_eps,
                    row.stats.sem,
                    100.0 * row.accuracy,
                    100.0 * row.failure_rate,
                    row.stats.n,
                );
            }
            if let Some(m) = self.means.iter().find(|m| m.model == model) {
                let _ = writeln!(
                    md,
                    "| {} | {MEAN_LABEL} | {:.2} | {MISSING} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {MISSING} |",
                    m.model,
                    m.rho,
                    m.sigma_eps,
                    m.mean_abs_eps,
                    m.sem,
                    100.0 * m.accuracy,
                    100.0 * m.failure_rate,
                );
            }
        }

        let datasets = self.datasets();
        if !datasets.is_empty() {
            md.push_str("\n## By dataset\n\n| Model |");
            for d in datasets.iter().copied().chain([MEAN_LABEL]) {
                let _ = write!(md, " {d} ρ | {d} σ_ε | {d} mean\\|ε\\| | {d} σ_M |");
            }
            md.push_str("\n|---|");
            md.push_str(&"---:|".repeat(4 * (datasets.len() + 1)));
            md.push('\n');
            for model in self.models() {
                let _ = write!(md, "| {model} |");
                for d in &datasets {
                    match self.rows().find(|r| r.model == model && r.dataset == *d) {
                        Some(r) => {
                            let _ = write!(
                                md,
                                " {:.2} | {:.2} | {:.2} | {:.2} |",
                                r.rho, r.stats.sigma_eps, r.stats.mean_abs_eps, r.stats.sem
                            );
                        }
                        None => md.push_str(&format!(" {MISSING} |").repeat(4)),
                    }
                }
                match self.means.iter().find(|m| m.model == model) {
                    Some(m) => {
                        let _ = write!(
                            md,
                            " {:.2} | {:.2} | {:.2} | {:.2} |",
                            m.rho, m.sigma_eps, m.mean_abs_eps, m.sem
                        );
                    }
                    None => md.push_str(&format!(" {MISSING} |").repeat(4)),
                }
                md.push('\n');
            }
        }

        let errors: Vec<_> = self.errors().collect();
        if !errors.is_empty() {
            md.push_str("\n## Cells without metrics\n\n");
            for (cell, err) in errors {
                let _ = writeln!(md, "- {} / {}: {err}", cell.model, cell.dataset);
            }
        }
        md
    }

    /// Same rows as the long Markdown table at full precision. Mean rows
    /// carry an empty p-value and n.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "dataset",
            "rho",
            "p_value",
            "sigma_eps",
            "mean_abs_eps",
            "sem",
            "accuracy_pct",
            "failure_rate_pct",
            "n",
            "mean_eps",
        ])
        .expect("in-memory csv");
        for model in self.models() {
            for r in self.rows().filter(|r| r.model == model) {
                w.write_record([
                    r.model.clone(),
                    r.dataset.clone(),
                    r.rho.to_string(),
                    r.p_value.to_string(),
                    r.stats.sigma_eps.to_string(),
                    r.stats.mean_abs_eps.to_string(),
                    r.stats.sem.to_string(),
                    (100.0 * r.accuracy).to_string(),
                    (100.0 * r.failure_rate).to_string(),
                    r.stats.n.to_string(),
                    r.stats.mean_eps.to_string(),
                ])
                .expect("in-memory csv");
            }
            if let Some(m) = self.means.iter().find(|m| m.model == model) {
                w.write_record([
                    m.model.clone(),
                    MEAN_LABEL.to_string(),
                    m.rho.to_string(),
                    String::new(),
                    m.sigma_eps.to_string(),
                    m.mean_abs_eps.to_string(),
                    m.sem.to_string(),
                    (100.0 * m.accuracy).to_string(),
                    (100.0 * m.failure_rate).to_string(),
                    String::new(),
                    String::new(),
                ])
                .expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Writes `report.md`, `report.csv` and `plots/<model>__<dataset>/*.csv`
    /// under `dir`, each via write-then-rename. Returns the paths written.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut put = |path: PathBuf, body: String| -> std::io::Result<()> {
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
            Ok(())
        };
        put(dir.join("report.md"), self.to_markdown())?;
        put(dir.join("report.csv"), self.to_csv())?;
        for cell in &self.cells {
            let sub = dir
                .join("plots")
                .join(format!("{}__{}", sanitize(&cell.model), sanitize(&cell.dataset)));
            put(sub.join("scatter.csv"), scatter_csv(&cell.plots))?;
            put(sub.join("epsilon_hist.csv"), epsilon_csv(&cell.plots))?;
            put(sub.join("confidence_hist.csv"), confidence_csv(&cell.plots))?;
        }
        Ok(written)
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub fn scatter_csv(plots: &PlotData) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &plots.scatter {
        w.serialize(p).expect("in-memory csv");
    }
    if plots.scatter.is_empty() {
        w.write_record(["question_id", "c_v", "c_i"]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn epsilon_csv(plots: &PlotData) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (k, n) in plots.epsilon.counts.iter().enumerate() {
        let (lo, hi) = plots.epsilon.edges(k);
        let _ = writeln!(out, "{lo},{hi},{n}");
    }
    out
}

pub fn confidence_csv(plots: &PlotData) -> String {
    let mut out = String::from("bin_lo,bin_hi,c_v_count,c_i_count\n");
    for (k, (v, i)) in plots.verbal.counts.iter().zip(&plots.internal.counts).enumerate() {
        let (lo, hi) = plots.verbal.edges(k);
        let _ = writeln!(out, "{lo},{hi},{v},{i}");
    }
    out
}

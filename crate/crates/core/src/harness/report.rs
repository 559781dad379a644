//! Result rows, metrics files and the comparison table.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const METRICS_HEADER: [&str; 8] = [
    "method",
    "scenario",
    "split",
    "seed",
    "accuracy",
    "loss",
    "teacher_acc",
    "soft_fraction",
];

/// One evaluation of one (method, seed) cell on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub scenario: String,
    pub split: String,
    pub seed: u64,
    pub accuracy: f64,
    /// Final-epoch training loss; absent for rows that involve no training run.
    pub loss: Option<f64>,
    /// Teacher accuracy on the same split.
    pub teacher_acc: f64,
    /// Final-epoch soft-target fraction.
    pub soft_fraction: Option<f64>,
    /// Unsupervised runs: agreement of the pseudo-labels with the ground truth.
    pub pseudo_label_acc: Option<f64>,
    /// Seconds spent on the cell; not written to CSV so that CSV output is reproducible.
    pub wall_clock_secs: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.scenario.clone(),
            r.split.clone(),
            r.seed.to_string(),
            r.accuracy.to_string(),
            opt(r.loss),
            r.teacher_acc.to_string(),
            opt(r.soft_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_json<W: Write>(rows: &[ResultRow], mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, rows)?;
    writeln!(writer)?;
    Ok(())
}

pub fn save_metrics(rows: &[ResultRow], dir: &Path) -> Result<()> {
    write_metrics_csv(rows, std::fs::File::create(dir.join("metrics.csv"))?)?;
    write_metrics_json(rows, std::fs::File::create(dir.join("metrics.json"))?)
}

/// Mean and sample standard deviation over seeds for one (method, split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Cell {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub splits: Vec<String>,
    /// Split the gaps are reported on.
    pub primary: String,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// Groups rows by method (first-appearance order) and split.
    pub fn from_rows(rows: &[ResultRow], primary: &str) -> Self {
        let mut methods: Vec<&str> = Vec::new();
        let mut splits: Vec<String> = Vec::new();
        for r in rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
            if !splits.contains(&r.split) {
                splits.push(r.split.clone());
            }
        }
        let out = methods
            .iter()
            .map(|&m| SummaryRow {
                method: m.to_owned(),
                cells: splits
                    .iter()
                    .map(|s| {
                        let v: Vec<f64> = rows
                            .iter()
                            .filter(|r| r.method == m && &r.split == s)
                            .map(|r| r.accuracy)
                            .collect();
                        Cell::from_values(&v)
                    })
                    .collect(),
            })
            .collect();
        Self {
            scenario: rows.first().map(|r| r.scenario.clone()).unwrap_or_default(),
            splits,
            primary: primary.to_owned(),
            rows: out,
        }
    }

    pub fn mean(&self, method: &str, split: &str) -> Option<f64> {
        let j = self.splits.iter().position(|s| s == split)?;
        let row = self.rows.iter().find(|r| r.method == method)?;
        Some(row.cells[j].mean)
    }

    fn primary_mean(&self, method: &str) -> Option<f64> {
        self.mean(method, &self.primary)
    }

    /// Best interpolated row on the primary split, as `(method, mean)`.
    pub fn best_interpolated(&self) -> Option<(String, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method.starts_with("interpolated"))
            .filter_map(|r| Some((r.method.clone(), self.primary_mean(&r.method)?)))
            .fold(None, |best: Option<(String, f64)>, (m, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((m, v)),
            })
    }

    /// Pairwise gaps on the primary split in percentage points, for whichever methods are
    /// present.
    pub fn gaps(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |label: String, a: Option<f64>, b: Option<f64>| {
            if let (Some(a), Some(b)) = (a, b) {
                out.push((label, 100.0 * (a - b)));
            }
        };
        let cond = self.primary_mean("conditional");
        let soft = self.primary_mean("soft_ts");
        push("conditional - soft_ts".into(), cond, soft);
        push("soft_ts - hard".into(), soft, self.primary_mean("hard"));
        push("conditional - hard".into(), cond, self.primary_mean("hard"));
        if let Some((m, v)) = self.best_interpolated() {
            push(format!("conditional - best interpolated [{m}]"), cond, Some(v));
        }
        push(
            "conditional - interpolated(0.5)".into(),
            cond,
            self.primary_mean("interpolated(0.5)"),
        );
        push(
            "wrong_only - conditional".into(),
            self.primary_mean("wrong_only"),
            cond,
        );
        push("conditional - unadapted".into(), cond, self.primary_mean("unadapted"));
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["method".to_owned(), "n_seeds".to_owned()];
        for s in &self.splits {
            header.push(format!("{s}_mean"));
            header.push(format!("{s}_std"));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone(), r.cells.first().map_or(0, |c| c.n).to_string()];
            for c in &r.cells {
                rec.push(c.mean.to_string());
                rec.push(c.std.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut header = vec!["method".to_owned()];
        header.extend(self.splits.iter().cloned());
        let mut lines: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut line = vec![r.method.clone()];
            line.extend(
                r.cells
                    .iter()
                    .map(|c| format!("{:.2} ± {:.2}", 100.0 * c.mean, 100.0 * c.std)),
            );
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("scenario: {}\n", self.scenario);
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, &w))| {
                    let pad = w - c.chars().count();
                    if j == 0 {
                        format!("{c}{}", " ".repeat(pad))
                    } else {
                        format!("{}{c}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out.push_str(
            "\nAccuracy in %, mean ± sample std over seeds. Higher is better; it stands in for \
             WER, where lower is better.\n",
        );
        let gaps = self.gaps();
        if !gaps.is_empty() {
            out.push_str(&format!("Gaps on {} (percentage points):\n", self.primary));
            for (label, g) in gaps {
                out.push_str(&format!("  {label}: {g:+.2}\n"));
            }
        }
        out
    }
}

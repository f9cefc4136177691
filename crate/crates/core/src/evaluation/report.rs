//! Plain-text tables, CSV files and the per-run log.
//!
//! Text tables show percentages as `mean ± std%`. CSV files carry fractions
//! with six decimals. Rendering depends only on the report values, so
//! identical reports give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiments::{
    Comparison, EncoderRanking, ExperimentKind, MatrixReport, RunRecord, COMPARISON_METRICS,
};
use crate::classifier::MeanStd;
use crate::error::{Error, Result};
use crate::signals::Awareness;

/// Conventions the reports rely on; written into `report.meta`.
pub const REPORT_NOTES: [(&str, &str); 4] = [
    ("averaging", "macro over LL/L/H/HH; 0/0 counts as 0"),
    ("ttest_pairing", "(user, run) diagonal cells, personalized vs leave-one-out combined"),
    ("std", "sample standard deviation over runs; a single run reports 0"),
    ("pca_fit", "train split only"),
];

/// `"92.68 ± 3.67%"` from percentages.
pub fn format_mean_std(mean_pct: f64, std_pct: f64) -> String {
    format!("{mean_pct:.2} ± {std_pct:.2}%")
}

/// Formats a fraction-valued summary as percentages. Single-run cells get a
/// trailing `†`.
pub fn format_cell(ms: &MeanStd) -> String {
    let s = format_mean_std(ms.mean * 100.0, ms.std * 100.0);
    if ms.single_run() {
        s + "†"
    } else {
        s
    }
}

/// `"p < 0.001"` below one in a thousand, otherwise three decimals.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p < 0.001".into()
    } else {
        format!("p = {p:.3}")
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s}{}", " ".repeat(widths[c] - s.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

fn single_run_note(cells: impl Iterator<Item = MeanStd>) -> &'static str {
    let mut cells = cells;
    if cells.any(|c| c.single_run()) {
        "† single run: standard deviation reported as 0\n"
    } else {
        ""
    }
}

fn title(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::CrossUser => "Cross-user accuracy matrix (rows: tested user, columns: trained on)",
        ExperimentKind::Combined => "Combined-user accuracy matrix (rows: tested user, columns: training group)",
        ExperimentKind::Personalized => "Personalized accuracy",
        ExperimentKind::EncoderComparison => "Encoder comparison",
    }
}

/// Text rendering of a matrix. Diagonal cells are wrapped in `*`.
pub fn matrix_text(r: &MatrixReport) -> String {
    let mut rows = vec![std::iter::once("Tested on".to_string()).chain(r.models.iter().cloned()).collect()];
    for (i, t) in r.tested.iter().enumerate() {
        let mut row = vec![t.clone()];
        for j in 0..r.models.len() {
            row.push(match &r.cells[i][j] {
                None => "-".into(),
                Some(c) if r.is_diagonal(i, j) => format!("*{}*", format_cell(&c.accuracy)),
                Some(c) => format_cell(&c.accuracy),
            });
        }
        rows.push(row);
    }
    let mut out = format!("{}\n\n", title(r.kind));
    out.push_str(&table(&rows));
    out.push_str("\n* diagonal: ");
    out.push_str(match r.kind {
        ExperimentKind::Combined => "leave-one-out (tested user excluded from training)\n",
        _ => "personalized model\n",
    });
    out.push_str(single_run_note(r.cells.iter().flatten().flatten().map(|c| c.accuracy)));
    out
}

fn ms_csv(ms: &MeanStd) -> String {
    format!("{:.6},{:.6}", ms.mean, ms.std)
}

/// One data row per (tested, model) cell.
pub fn matrix_csv(r: &MatrixReport) -> String {
    let mut out = String::from(
        "tested_on,trained_on,diagonal,n_runs,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std\n",
    );
    for (i, t) in r.tested.iter().enumerate() {
        for (j, m) in r.models.iter().enumerate() {
            if let Some(c) = &r.cells[i][j] {
                let _ = writeln!(
                    out,
                    "{t},{m},{},{},{},{},{},{}",
                    r.is_diagonal(i, j),
                    c.accuracy.n,
                    ms_csv(&c.accuracy),
                    ms_csv(&c.precision),
                    ms_csv(&c.recall),
                    ms_csv(&c.f1)
                );
            }
        }
    }
    out
}

pub fn ranking_text(r: &EncoderRanking) -> String {
    let mut rows = vec![vec!["Rank".to_string(), "Encoding Method".into(), "Validation Accuracy".into()]];
    for (i, row) in r.rows.iter().enumerate() {
        rows.push(vec![(i + 1).to_string(), row.label.clone(), format_cell(&row.val_accuracy)]);
    }
    let mut out = format!("Impact of signal-to-image encoding on validation accuracy ({})\n\n", r.user_id);
    out.push_str(&table(&rows));
    out.push_str(single_run_note(r.rows.iter().map(|x| x.val_accuracy)));
    out
}

pub fn ranking_csv(r: &EncoderRanking) -> String {
    let mut out = String::from("rank,encoder,n_runs,val_accuracy_mean,val_accuracy_std,val_f1_mean,val_f1_std\n");
    for (i, row) in r.rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            row.label,
            row.val_accuracy.n,
            ms_csv(&row.val_accuracy),
            ms_csv(&row.val_f1)
        );
    }
    out
}

fn approach_cells(a: &super::experiments::ApproachSummary) -> [MeanStd; 4] {
    [a.accuracy, a.precision, a.recall, a.f1]
}

pub fn comparison_text(c: &Comparison) -> String {
    let mut rows = vec![vec![
        "Model Approach".to_string(),
        "Accuracy".into(),
        "Precision".into(),
        "Recall".into(),
        "F1-Score".into(),
    ]];
    for (name, a) in [("Personalized", &c.personalized), ("Combined (General)", &c.combined)] {
        rows.push(std::iter::once(name.to_string()).chain(approach_cells(a).iter().map(format_cell)).collect());
    }
    rows.push(std::iter::once("Significance".to_string()).chain(c.ttests.iter().map(|t| format_p(t.p))).collect());
    let mut out = String::from("Overall performance comparison (mean ± std over user-run pairs)\n\n");
    out.push_str(&table(&rows));
    out.push('\n');
    for (name, t) in COMPARISON_METRICS.iter().zip(&c.ttests) {
        let _ = writeln!(
            out,
            "paired t-test {name}: t = {:.4}, df = {}, {}{}",
            t.t,
            t.df,
            format_p(t.p),
            if t.degenerate_variance { " (zero variance in differences)" } else { "" }
        );
    }
    out
}

pub fn comparison_csv(c: &Comparison) -> String {
    let mut out = String::from("row,accuracy,precision,recall,f1\n");
    for (name, a) in [("personalized", &c.personalized), ("combined", &c.combined)] {
        let cells = approach_cells(a);
        let _ = writeln!(out, "{name}_mean,{}", cells.map(|m| format!("{:.6}", m.mean)).join(","));
        let _ = writeln!(out, "{name}_std,{}", cells.map(|m| format!("{:.6}", m.std)).join(","));
    }
    let _ = writeln!(out, "t,{}", c.ttests.map(|t| format!("{:.6}", t.t)).join(","));
    let _ = writeln!(out, "df,{}", c.ttests.map(|t| t.df.to_string()).join(","));
    let _ = writeln!(out, "p,{}", c.ttests.map(|t| format!("{:.6e}", t.p)).join(","));
    out
}

/// Per-user, per-approach, per-class recall; bar-chart data.
pub fn classwise_csv(c: &Comparison) -> String {
    let mut out = String::from("user,approach,class,recall_mean,recall_std\n");
    for row in &c.classwise {
        for a in Awareness::ALL {
            let _ = writeln!(out, "{},{},{},{}", row.user, row.approach, a.name(), ms_csv(&row.recall[a.index()]));
        }
    }
    out
}

pub fn runs_jsonl(runs: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in runs {
        out.push_str(&serde_json::to_string(r).expect("run records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_runs_jsonl(text: &str) -> std::result::Result<Vec<RunRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_runs_jsonl(&text).map_err(|m| Error::format(path, m))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Writes `<stem>.txt` and `<stem>.csv`.
pub fn emit_matrix(r: &MatrixReport, dir: &Path, stem: &str) -> Result<()> {
    write(dir, &format!("{stem}.txt"), &matrix_text(r))?;
    write(dir, &format!("{stem}.csv"), &matrix_csv(r))
}

pub fn emit_ranking(r: &EncoderRanking, dir: &Path) -> Result<()> {
    write(dir, "table1.txt", &ranking_text(r))?;
    write(dir, "table1.csv", &ranking_csv(r))
}

/// Writes `table4.txt`, `table4.csv` and `classwise_recall.csv`.
pub fn emit_comparison(c: &Comparison, dir: &Path) -> Result<()> {
    write(dir, "table4.txt", &comparison_text(c))?;
    write(dir, "table4.csv", &comparison_csv(c))?;
    write(dir, "classwise_recall.csv", &classwise_csv(c))
}

pub fn emit_runs(runs: &[RunRecord], dir: &Path) -> Result<()> {
    write(dir, "runs.jsonl", &runs_jsonl(runs))
}

pub fn emit_notes(dir: &Path) -> Result<()> {
    let body: String = REPORT_NOTES.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write(dir, "report.meta", &body)
}

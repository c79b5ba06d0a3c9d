//! Long-form CSV and table-shaped markdown renderings of result grids.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{CellKey, CellStatus, CellSummary, GridCell, ResultsGrid, RunnerError, Stat};
use crate::augment::MethodId;

/// Metric names of the long-form CSV, in row order within a cell.
pub const METRICS: [&str; 4] = ["auroc", "auprc", "majority_auroc", "majority_auprc"];

const HEADER: [&str; 8] = ["group", "outcome", "method", "metric", "mean", "std", "reps", "skipped"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn metric(s: &CellSummary, name: &str) -> Option<Stat> {
    match name {
        "auroc" => s.auroc,
        "auprc" => s.auprc,
        "majority_auroc" => s.majority_auroc,
        "majority_auprc" => s.majority_auprc,
        _ => None,
    }
}

fn status_text(status: &CellStatus) -> String {
    match status {
        CellStatus::Complete => String::new(),
        CellStatus::Skipped(r) => format!("skipped: {r}"),
        CellStatus::Failed(r) => format!("failed: {r}"),
    }
}

/// Writes one row per cell and metric. Minority metrics always get a row
/// (empty mean and std when undefined); majority rows appear only when defined.
pub fn write_csv<W: Write>(grid: &ResultsGrid, writer: W) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for c in &grid.cells {
        for name in METRICS {
            let stat = metric(&c.summary, name);
            if stat.is_none() && name.starts_with("majority") {
                continue;
            }
            let (mean, std) = stat.map_or((String::new(), String::new()), |s| {
                (s.mean.to_string(), s.std.to_string())
            });
            w.write_record([
                c.key.group.as_str(),
                &c.key.outcome,
                c.key.method.name(),
                name,
                &mean,
                &std,
                &c.summary.reps.to_string(),
                &status_text(&c.summary.status),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_csv`].
pub fn read_csv<R: Read>(reader: R) -> Result<ResultsGrid, RunnerError> {
    let bad = |m: String| RunnerError::Results(m);
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut grid = ResultsGrid::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let method: MethodId = rec[2].parse().map_err(|e| bad(format!("row {row}: {e}")))?;
        let key = CellKey {
            group: rec[0].to_string(),
            outcome: rec[1].to_string(),
            method,
        };
        let parse = |s: &str| -> Result<f64, RunnerError> {
            s.parse().map_err(|_| bad(format!("row {row}: invalid number {s:?}")))
        };
        let stat = if rec[4].is_empty() {
            None
        } else {
            Some(Stat {
                mean: parse(&rec[4])?,
                std: parse(&rec[5])?,
            })
        };
        let reps: usize = rec[6].parse().map_err(|_| bad(format!("row {row}: invalid reps")))?;
        let status = match &rec[7] {
            "" => CellStatus::Complete,
            s => {
                if let Some(r) = s.strip_prefix("skipped: ") {
                    CellStatus::Skipped(r.to_string())
                } else if let Some(r) = s.strip_prefix("failed: ") {
                    CellStatus::Failed(r.to_string())
                } else {
                    return Err(bad(format!("row {row}: invalid status {s:?}")));
                }
            }
        };
        if grid.cells.last().map(|c| &c.key) != Some(&key) {
            grid.cells.push(GridCell {
                key,
                summary: CellSummary {
                    reps,
                    auroc: None,
                    auprc: None,
                    majority_auroc: None,
                    majority_auprc: None,
                    status,
                },
            });
        }
        let s = &mut grid.cells.last_mut().expect("just pushed").summary;
        match &rec[3] {
            "auroc" => s.auroc = stat,
            "auprc" => s.auprc = stat,
            "majority_auroc" => s.majority_auroc = stat,
            "majority_auprc" => s.majority_auprc = stat,
            other => return Err(bad(format!("row {row}: unknown metric {other:?}"))),
        }
    }
    Ok(grid)
}

fn column_name(m: MethodId) -> &'static str {
    match m {
        MethodId::GptGroup => "Group",
        MethodId::GptGeneric => "Generic",
        other => other.name(),
    }
}

/// Collects footnotes for cells that cannot show a plain value.
#[derive(Default)]
struct Notes(Vec<String>);

impl Notes {
    fn add(&mut self, text: String) -> String {
        self.0.push(text);
        format!("[^{}]", self.0.len())
    }

    fn render(&self, out: &mut String) {
        if !self.0.is_empty() {
            out.push('\n');
            for (i, n) in self.0.iter().enumerate() {
                let _ = writeln!(out, "[^{}]: {n}", i + 1);
            }
        }
    }
}

/// Formats a row of values, bolding every value equal to the row maximum.
fn row_cells(values: &[Option<f64>], decimals: usize) -> Vec<String> {
    let best = values
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| match v {
            Some(x) if *x == best => format!("**{x:.decimals$}**"),
            Some(x) => format!("{x:.decimals$}"),
            None => "—".to_string(),
        })
        .collect()
}

fn cell_value(
    summary: Option<&CellSummary>,
    stat: fn(&CellSummary) -> Option<Stat>,
    label: &str,
    notes: &mut Notes,
) -> (Option<f64>, String) {
    match summary {
        None => (None, String::new()),
        Some(s) => {
            let value = stat(s).map(|st| st.mean);
            let note = match &s.status {
                CellStatus::Complete => String::new(),
                CellStatus::Skipped(r) => notes.add(format!("{label}: skipped ({r})")),
                CellStatus::Failed(r) => notes.add(format!("{label}: failed after {} repetitions ({r})", s.reps)),
            };
            (value, note)
        }
    }
}

fn metric_table(
    grid: &ResultsGrid,
    dataset: &str,
    title: &str,
    stat: fn(&CellSummary) -> Option<Stat>,
    out: &mut String,
) {
    let methods = grid.methods();
    let _ = writeln!(out, "### {title}\n");
    let standard: Vec<&str> = methods
        .iter()
        .filter(|m| matches!(m, MethodId::Upweighted | MethodId::Separate | MethodId::Smote))
        .map(|m| column_name(*m))
        .collect();
    let llm: Vec<&str> = methods
        .iter()
        .filter(|m| m.uses_llm())
        .map(|m| column_name(*m))
        .collect();
    if !standard.is_empty() {
        let _ = writeln!(out, "Standard approaches: {}.", standard.join(", "));
    }
    if !llm.is_empty() {
        let _ = writeln!(out, "LLM generation: {}.", llm.join(", "));
    }
    out.push('\n');

    let mut header = vec!["Dataset", "Subgroup", "Outcome"];
    header.extend(methods.iter().map(|m| column_name(*m)));
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));

    let mut notes = Notes::default();
    for (group, outcome) in grid.rows() {
        let mut values = Vec::new();
        let mut marks = Vec::new();
        for &m in &methods {
            let label = format!("{group} / {outcome} / {}", column_name(m));
            let (v, note) = cell_value(grid.get(&group, &outcome, m), stat, &label, &mut notes);
            values.push(v);
            marks.push(note);
        }
        let cells: Vec<String> = row_cells(&values, 4)
            .into_iter()
            .zip(marks)
            .map(|(c, n)| c + &n)
            .collect();
        let _ = writeln!(out, "| {dataset} | {group} | {outcome} | {} |", cells.join(" | "));
    }
    notes.render(out);
    out.push('\n');
}

/// AUROC and AUPRC tables with the best method per row in bold.
pub fn render_markdown(grid: &ResultsGrid, dataset: &str) -> String {
    let mut out = String::new();
    metric_table(grid, dataset, "AUROC", |s| s.auroc, &mut out);
    metric_table(grid, dataset, "AUPRC", |s| s.auprc, &mut out);
    out
}

/// LLM method used to compare sweep settings: group-tailored when present.
fn sweep_method(grid: &ResultsGrid) -> Option<MethodId> {
    let methods = grid.methods();
    [MethodId::GptGroup, MethodId::GptGeneric]
        .into_iter()
        .find(|m| methods.contains(m))
}

/// Rows `(group, outcome)`, one column per temperature, AUROC to 6 decimals.
pub fn render_temperature_markdown(grids: &[(f64, ResultsGrid)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = grids.first() else {
        return out;
    };
    let method = sweep_method(first).unwrap_or(MethodId::GptGroup);
    let _ = writeln!(out, "### AUROC by temperature ({})\n", column_name(method));
    let mut header = vec!["Subgroup".to_string(), "Outcome".to_string()];
    header.extend(grids.iter().map(|(t, _)| format!("Temp = {t}")));
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
    let mut notes = Notes::default();
    for (group, outcome) in first.rows() {
        let mut values = Vec::new();
        let mut marks = Vec::new();
        for (t, g) in grids {
            let label = format!("{group} / {outcome} / Temp = {t}");
            let (v, n) = cell_value(g.get(&group, &outcome, method), |s| s.auroc, &label, &mut notes);
            values.push(v);
            marks.push(n);
        }
        let cells: Vec<String> = row_cells(&values, 6)
            .into_iter()
            .zip(marks)
            .map(|(c, n)| c + &n)
            .collect();
        let _ = writeln!(out, "| {group} | {outcome} | {} |", cells.join(" | "));
    }
    notes.render(&mut out);
    out
}

/// Rows `(group, outcome, size)`, one column per method, AUROC to 4 decimals.
pub fn render_size_markdown(grids: &[(usize, ResultsGrid)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = grids.first() else {
        return out;
    };
    let methods = first.methods();
    let _ = writeln!(out, "### AUROC by minority training size\n");
    let mut header = vec!["Subgroup", "Outcome", "Size"];
    header.extend(methods.iter().map(|m| column_name(*m)));
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
    let mut notes = Notes::default();
    for (group, outcome) in first.rows() {
        for (size, g) in grids {
            let mut values = Vec::new();
            let mut marks = Vec::new();
            for &m in &methods {
                let label = format!("{group} / {outcome} / {size} / {}", column_name(m));
                let (v, n) = cell_value(g.get(&group, &outcome, m), |s| s.auroc, &label, &mut notes);
                values.push(v);
                marks.push(n);
            }
            let cells: Vec<String> = row_cells(&values, 4)
                .into_iter()
                .zip(marks)
                .map(|(c, n)| c + &n)
                .collect();
            let _ = writeln!(out, "| {group} | {outcome} | {size} | {} |", cells.join(" | "));
        }
    }
    notes.render(&mut out);
    out
}

/// Writes `results.csv` or `results.md` into `dir` and returns the path.
pub fn write_report(
    grid: &ResultsGrid,
    format: ReportFormat,
    dir: &Path,
    dataset: &str,
) -> Result<PathBuf, RunnerError> {
    if grid.is_empty() {
        return Err(RunnerError::Results("cannot report an empty grid".into()));
    }
    std::fs::create_dir_all(dir)?;
    match format {
        ReportFormat::Csv => {
            let path = dir.join("results.csv");
            write_csv(grid, std::fs::File::create(&path)?)?;
            Ok(path)
        }
        ReportFormat::Markdown => {
            let path = dir.join("results.md");
            std::fs::write(&path, render_markdown(grid, dataset))?;
            Ok(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(group: &str, method: MethodId, auroc: Option<f64>, status: CellStatus) -> GridCell {
        GridCell {
            key: CellKey {
                group: group.into(),
                outcome: "CVD".into(),
                method,
            },
            summary: CellSummary {
                reps: usize::from(auroc.is_some()) * 3,
                auroc: auroc.map(|m| Stat { mean: m, std: 0.01 }),
                auprc: auroc.map(|m| Stat { mean: m / 3.0, std: 0.1 }),
                majority_auroc: None,
                majority_auprc: None,
                status,
            },
        }
    }

    #[test]
    fn ties_are_all_bold() {
        let cells = row_cells(&[Some(0.5), Some(0.7), Some(0.7), None], 4);
        assert_eq!(cells, ["0.5000", "**0.7000**", "**0.7000**", "—"]);
    }

    #[test]
    fn skipped_cell_gets_footnote() {
        let grid = ResultsGrid {
            cells: vec![
                cell("Black", MethodId::Baseline, Some(0.61), CellStatus::Complete),
                cell("Black", MethodId::Separate, None, CellStatus::Skipped("no cases".into())),
            ],
        };
        let md = render_markdown(&grid, "Fixture");
        assert!(md.contains("| Fixture | Black | CVD | **0.6100** | —[^1] |"), "{md}");
        assert!(md.contains("[^1]: Black / CVD / Separate: skipped (no cases)"));
    }
}

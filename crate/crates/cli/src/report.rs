//! Markdown tables of average accuracy and forgetting, rebuilt from the
//! score CSV and cross-checked against `summary.json`.

use std::fmt::Write as _;
use std::path::Path;

use kancfd::continual::ScoreMatrix;

use crate::artifacts::{
    parse_summary_json, step_summaries, StepSummary, Summary, MANIFEST_FILE, SCORES_FILE, SUMMARY_FILE,
};
use crate::error::{CliError, Result};

/// Largest tolerated gap between recomputed and stored summary numbers.
pub const REPORT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: Summary,
    /// Step summaries recomputed from `scores.csv`.
    pub recomputed: Vec<StepSummary>,
    pub markdown: String,
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= REPORT_TOLERANCE,
        (None, None) => true,
        _ => false,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"))
}

pub fn render_markdown(summary: &Summary, steps: &[StepSummary]) -> String {
    let mut s = format!(
        "### {} seed {} head {}\n\n| step | Acc AA | Acc AF | AUC AA | AUC AF |\n|---:|---:|---:|---:|---:|\n",
        summary.protocol, summary.seed, summary.head
    );
    for st in steps {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            st.step,
            cell(Some(st.acc_aa)),
            cell(st.acc_af),
            cell(Some(st.auc_aa)),
            cell(st.auc_af)
        );
    }
    s
}

/// Reads a run directory, recomputes every summary number from the CSV and
/// fails if any differs from `summary.json` by more than [`REPORT_TOLERANCE`].
pub fn report(dir: impl AsRef<Path>) -> Result<Report> {
    let dir = dir.as_ref();
    let missing: Vec<String> = [SCORES_FILE, SUMMARY_FILE, MANIFEST_FILE]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts {
            dir: dir.display().to_string(),
            missing,
        });
    }
    let scores = ScoreMatrix::parse_csv(&std::fs::read_to_string(dir.join(SCORES_FILE))?)
        .map_err(|e| CliError::artifact(SCORES_FILE, e.to_string()))?;
    let summary = parse_summary_json(&std::fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
    let recomputed = step_summaries(&scores)?;
    if recomputed.len() != summary.steps.len() {
        return Err(CliError::artifact(
            SUMMARY_FILE,
            format!("{} steps but {SCORES_FILE} has {}", summary.steps.len(), recomputed.len()),
        ));
    }
    for (r, s) in recomputed.iter().zip(&summary.steps) {
        let same = close(Some(r.acc_aa), Some(s.acc_aa))
            && close(r.acc_af, s.acc_af)
            && close(Some(r.auc_aa), Some(s.auc_aa))
            && close(r.auc_af, s.auc_af);
        if !same {
            return Err(CliError::artifact(
                SUMMARY_FILE,
                format!("step {} disagrees with {SCORES_FILE}: {s:?} vs recomputed {r:?}", s.step),
            ));
        }
    }
    let markdown = render_markdown(&summary, &recomputed);
    Ok(Report {
        summary,
        recomputed,
        markdown,
    })
}

//! Rendering of evaluation reports: JSON lines, an aligned table in the
//! column order `F1_U  F1_S  H_OZSL`, and per-class precision/recall
//! series for bar plots.

use crate::error::{Error, Result};
use crate::metrics::{format_percent, EvalReport};

pub fn reports_jsonl(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_json());
        out.push('\n');
    }
    out
}

pub fn parse_reports_jsonl(text: &str) -> Result<Vec<EvalReport>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("report line {}: {e}", i + 1))))
        .collect()
}

const COLUMNS: [&str; 9] = ["run", "F1_U", "F1_S", "H_OZSL", "R_U", "R_S", "H_GZSL", "P_Ω", "R_Ω"];

/// Aligned percentage table, one row per report, plus the convention footer.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![COLUMNS.iter().map(|c| c.to_string()).collect()];
    rows[0].push("F1_Ω".into());
    for r in reports {
        let mut row = vec![r.label.clone()];
        for v in [r.f1_unseen, r.f1_seen, r.h_ozsl, r.r_unseen, r.r_seen, r.h_gzsl, r.p_omega, r.r_omega, r.f1_omega] {
            row.push(format_percent(v));
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push_str("scores in %, 2 decimals, round-half-even; a ratio with zero denominator is reported as 0\n");
    out
}

/// Tab-separated `run class role precision recall`, one line per class and
/// report, followed by the unknown bin.
pub fn pr_series(reports: &[EvalReport]) -> String {
    let mut out = String::from("run\tclass\trole\tprecision\trecall\n");
    for r in reports {
        for c in &r.per_class {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.label, c.class, c.role, c.scores.precision, c.scores.recall
            ));
        }
        out.push_str(&format!("{}\tUNKNOWN\tunknown\t{}\t{}\n", r.label, r.p_omega, r.r_omega));
    }
    out
}

//! CSV and aligned-text renderings of evaluation results.

use super::metrics::{ConfusionMatrix, Metrics};
use crate::dnn::EpochRecord;

/// `metric,value` rows for one evaluation.
pub fn metrics_csv(m: &Metrics, cm: &ConfusionMatrix) -> String {
    let mut out = String::from("metric,value\n");
    for (k, v) in [
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
    ] {
        out.push_str(&format!("{k},{v}\n"));
    }
    for (k, v) in [("tp", cm.tp), ("tn", cm.tn), ("fp", cm.fp), ("fn", cm.fn_)] {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

pub fn curves_csv(epochs: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,valid_loss,train_acc,valid_acc\n");
    for e in epochs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.train_loss, e.valid_loss, e.train_acc, e.valid_acc
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Generic table as CSV.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let fields: Vec<String> = r.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Left-aligned first column, right-aligned remaining columns.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, f) in r.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(f.chars().count());
        }
    }
    let render = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = render(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&rule.join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&render(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Fixed four-decimal rendering used in tables.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

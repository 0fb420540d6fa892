//! The final summary table: one row per architecture, one column per
//! language, macro-F1 as a percentage. Missing cells render as "-".

use std::collections::BTreeMap;

use crate::corpus::Language;

/// Render the arch × language macro-F1 table. Rows are sorted by
/// architecture name; columns follow the canonical language order.
/// Deterministic: identical inputs give identical bytes.
pub fn render_table(cells: &BTreeMap<String, BTreeMap<Language, f64>>) -> String {
    let mut width = "model".len();
    for arch in cells.keys() {
        width = width.max(arch.len());
    }
    let mut out = String::new();
    out.push_str(&format!("{:<width$}", "model"));
    for lang in Language::ALL {
        out.push_str(&format!("  {:>8}", lang.code()));
    }
    out.push('\n');
    out.push_str(&"-".repeat(width + Language::ALL.len() * 10));
    out.push('\n');
    for (arch, row) in cells {
        out.push_str(&format!("{arch:<width$}"));
        for lang in Language::ALL {
            match row.get(&lang) {
                Some(f1) => out.push_str(&format!("  {:>7.2}%", f1 * 100.0)),
                None => out.push_str(&format!("  {:>8}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

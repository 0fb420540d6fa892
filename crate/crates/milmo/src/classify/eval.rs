//! Precision/recall/F1 evaluation with macro averaging.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassifyError;

/// Per-class counts and derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Evaluation result: per-class metrics, their unweighted mean F1, and the
/// confusion matrix (rows gold, columns predicted, in `labels` order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compare `gold` and `pred` label sequences over a declared label set.
/// Classes absent from both gold and predictions contribute F1 = 0 to the
/// macro average; undefined precision/recall ratios are 0 by the same
/// convention.
pub fn evaluate(
    gold: &[String],
    pred: &[String],
    label_set: &[String],
) -> Result<EvalReport, ClassifyError> {
    if gold.len() != pred.len() {
        return Err(ClassifyError::Input(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(ClassifyError::Input("empty evaluation".into()));
    }
    if label_set.is_empty() {
        return Err(ClassifyError::Input("empty label set".into()));
    }
    let index: BTreeMap<&str, usize> = label_set
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let n = label_set.len();
    let mut confusion = vec![vec![0u64; n]; n];
    for (g, p) in gold.iter().zip(pred) {
        let gi = *index
            .get(g.as_str())
            .ok_or_else(|| ClassifyError::Input(format!("gold label {g:?} not in label set")))?;
        let pi = *index
            .get(p.as_str())
            .ok_or_else(|| ClassifyError::Input(format!("predicted label {p:?} not in label set")))?;
        confusion[gi][pi] += 1;
    }

    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for (i, label) in label_set.iter().enumerate() {
        let tp = confusion[i][i];
        let gold_count: u64 = confusion[i].iter().sum();
        let pred_count: u64 = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, pred_count);
        let recall = ratio(tp, gold_count);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        f1_sum += f1;
        per_class.insert(
            label.clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support: gold_count,
            },
        );
    }

    Ok(EvalReport {
        labels: label_set.to_vec(),
        per_class,
        macro_f1: f1_sum / n as f64,
        confusion,
    })
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<(), ClassifyError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ClassifyError::Input(format!("serialize report: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, ClassifyError> {
        let content = std::fs::read_to_string(path)?;
        serde_json::from_str(&content)
            .map_err(|e| ClassifyError::Input(format!("parse report: {e}")))
    }
}

/// One scored example in a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub example_id: String,
    pub gold: String,
    pub pred: String,
}

/// Write predictions as TSV `example_id<TAB>gold<TAB>pred`.
pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<(), ClassifyError> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in predictions {
        writeln!(w, "{}\t{}\t{}", p.example_id, p.gold, p.pred)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a predictions TSV.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, ClassifyError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(example_id), Some(gold), Some(pred)) =
            (parts.next(), parts.next(), parts.next())
        else {
            return Err(ClassifyError::Input(format!(
                "line {}: expected example_id<TAB>gold<TAB>pred",
                i + 1
            )));
        };
        out.push(Prediction {
            example_id: example_id.to_string(),
            gold: gold.to_string(),
            pred: pred.to_string(),
        });
    }
    Ok(out)
}

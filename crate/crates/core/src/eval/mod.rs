//! Confusion matrices, per-class scores and misclassification asymmetry.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::nn::{argmax, Checkpoint, Dataset};

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        Self {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = labels.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::shape(format!("counts are not {k} x {k}")));
        }
        Ok(Self { labels, counts })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Reorders labels; `order[i]` is the old index of the new label `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let k = self.labels.len();
        let mut seen = vec![false; k];
        for &o in order {
            if o >= k || std::mem::replace(&mut seen[o], true) {
                return Err(Error::invalid(format!(
                    "{order:?} is not a permutation of 0..{k}"
                )));
            }
        }
        if order.len() != k {
            return Err(Error::invalid(format!(
                "{order:?} is not a permutation of 0..{k}"
            )));
        }
        Ok(Self {
            labels: order.iter().map(|&o| self.labels[o].clone()).collect(),
            counts: order
                .iter()
                .map(|&r| order.iter().map(|&c| self.counts[r][c]).collect())
                .collect(),
        })
    }

    /// Header row `true\predicted,<labels>`, then one row per true label.
    pub fn to_csv(&self) -> String {
        let mut out = format!("true\\predicted,{}\n", self.labels.join(","));
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        out
    }
}

/// Scores every item of `data` with the checkpoint's network.
pub fn evaluate_dataset(checkpoint: &Checkpoint, data: &Dataset) -> Result<ConfusionMatrix> {
    if checkpoint.labels != data.label_set() {
        return Err(Error::Config(format!(
            "checkpoint labels {:?} differ from data labels {:?}",
            checkpoint.labels,
            data.label_set()
        )));
    }
    if data.is_empty() {
        return Err(Error::Config("evaluation split is empty".into()));
    }
    let net = checkpoint.network()?;
    let mut cm = ConfusionMatrix::new(checkpoint.labels.clone());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(64) {
        let batch = data.batch(chunk, &checkpoint.norm)?;
        for (row, &i) in net.predict_logits(&batch)?.iter().zip(chunk) {
            cm.record(data.target(i), argmax(row));
        }
    }
    Ok(cm)
}

/// Renders `split` of the manifest through the checkpoint's own spectrogram
/// settings and scores it.
pub fn evaluate(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    manifest_path: &Path,
    split: Split,
) -> Result<ConfusionMatrix> {
    if checkpoint.labels != manifest.label_set {
        return Err(Error::Config(format!(
            "checkpoint labels {:?} differ from manifest labels {:?}",
            checkpoint.labels, manifest.label_set
        )));
    }
    if manifest.split(split).next().is_none() {
        return Err(Error::Config(format!("manifest has no {split} entries")));
    }
    let data = Dataset::from_manifest(manifest, manifest_path, &checkpoint.pipeline, split)?;
    evaluate_dataset(checkpoint, &data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub label: String,
    pub support: u64,
    pub recall: f64,
    /// Row sum was zero; `recall` is reported as 0.
    pub recall_undefined: bool,
    pub precision: f64,
    /// Column sum was zero; `precision` is reported as 0.
    pub precision_undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAsymmetry {
    pub a: String,
    pub b: String,
    pub a_to_b: u64,
    pub b_to_a: u64,
    /// `max(a_to_b, b_to_a) / max(1, min(a_to_b, b_to_a))`.
    pub ratio: f64,
    /// One direction has no errors, so the ratio is a raw count.
    pub involves_zero: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub per_class: Vec<ClassScores>,
    /// Every unordered label pair, in label order.
    pub asymmetry: Vec<PairAsymmetry>,
    pub runtime_seconds: f64,
}

pub fn summarize(cm: &ConfusionMatrix, runtime_seconds: f64) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let k = cm.labels.len();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let per_class = (0..k)
        .map(|i| {
            let row: u64 = cm.counts[i].iter().sum();
            let col: u64 = (0..k).map(|r| cm.counts[r][i]).sum();
            ClassScores {
                label: cm.labels[i].clone(),
                support: row,
                recall: ratio(cm.counts[i][i], row),
                recall_undefined: row == 0,
                precision: ratio(cm.counts[i][i], col),
                precision_undefined: col == 0,
            }
        })
        .collect();
    let mut asymmetry = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let (ab, ba) = (cm.counts[a][b], cm.counts[b][a]);
            asymmetry.push(PairAsymmetry {
                a: cm.labels[a].clone(),
                b: cm.labels[b].clone(),
                a_to_b: ab,
                b_to_a: ba,
                ratio: ab.max(ba) as f64 / ab.min(ba).max(1) as f64,
                involves_zero: ab.min(ba) == 0,
            });
        }
    }
    let correct = cm.trace();
    Ok(EvalReport {
        accuracy: correct as f64 / total as f64,
        correct,
        total,
        per_class,
        asymmetry,
        runtime_seconds,
    })
}

impl EvalReport {
    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::from("# confusion rows = true label, columns = predicted label\n");
        let _ = writeln!(out, "accuracy = {}", self.accuracy);
        let _ = writeln!(out, "correct = {}", self.correct);
        let _ = writeln!(out, "total = {}", self.total);
        for c in &self.per_class {
            let _ = writeln!(out, "support.{} = {}", c.label, c.support);
            let _ = writeln!(out, "recall.{} = {}", c.label, c.recall);
            let _ = writeln!(out, "precision.{} = {}", c.label, c.precision);
            if c.recall_undefined {
                let _ = writeln!(out, "recall_undefined.{} = true", c.label);
            }
            if c.precision_undefined {
                let _ = writeln!(out, "precision_undefined.{} = true", c.label);
            }
        }
        let _ = writeln!(out, "runtime_seconds = {:.3}", self.runtime_seconds);
        out
    }

    /// `label_a,label_b,a_to_b,b_to_a,ratio,involves_zero`.
    pub fn asymmetry_csv(&self) -> String {
        let mut out = String::from("label_a,label_b,a_to_b,b_to_a,ratio,involves_zero\n");
        for p in &self.asymmetry {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.a, p.b, p.a_to_b, p.b_to_a, p.ratio, p.involves_zero
            );
        }
        out
    }
}

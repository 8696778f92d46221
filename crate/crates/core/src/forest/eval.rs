use std::fmt::Write as _;

use super::{Dataset, ForestError, ForestModel};

/// Per-class precision/recall/F1 and the confusion matrix
/// (`confusion[true][predicted]`). Undefined ratios are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate_predictions(classes: &[String], truth: &[u32], predicted: &[u32]) -> EvalReport {
    assert_eq!(truth.len(), predicted.len());
    let k = classes.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t as usize][p as usize] += 1;
    }
    let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted_n: Vec<u64> = (0..k).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
    let precision: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], predicted_n[c])).collect();
    let recall: Vec<f64> = (0..k).map(|c| ratio(confusion[c][c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();
    let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
    let mean = |v: &[f64]| if k == 0 { 0.0 } else { v.iter().sum::<f64>() / k as f64 };
    EvalReport {
        classes: classes.to_vec(),
        accuracy: ratio(correct, truth.len() as u64),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        confusion,
        precision,
        recall,
        f1,
        support,
    }
}

pub fn evaluate(model: &ForestModel, ds: &Dataset) -> Result<EvalReport, ForestError> {
    let mut predicted = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        predicted.push(model.predict_class(ds.row(i))? as u32);
    }
    // dataset labels index the dataset's own dictionary
    let mut truth = Vec::with_capacity(ds.len());
    for &y in ds.labels() {
        let name = &ds.classes[y as usize];
        match model.classes.iter().position(|c| c == name) {
            Some(i) => truth.push(i as u32),
            None => return Err(ForestError::UnknownClass(name.clone())),
        }
    }
    Ok(evaluate_predictions(&model.classes, &truth, &predicted))
}

impl EvalReport {
    /// Aligned table with a confusion matrix below it.
    pub fn to_text(&self) -> String {
        let w = self.classes.iter().map(|c| c.len()).max().unwrap_or(0).max(9);
        let mut s = String::new();
        let _ = writeln!(s, "{:<w$} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support");
        for (i, c) in self.classes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{c:<w$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                self.precision[i], self.recall[i], self.f1[i], self.support[i]
            );
        }
        let total: u64 = self.support.iter().sum();
        let _ = writeln!(
            s,
            "{:<w$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1, total
        );
        let _ = writeln!(s, "accuracy {:.4}", self.accuracy);
        let _ = writeln!(s, "\nconfusion (rows = true class)");
        let _ = write!(s, "{:<w$}", "");
        for c in &self.classes {
            let _ = write!(s, " {c:>w$}");
        }
        let _ = writeln!(s);
        for (i, c) in self.classes.iter().enumerate() {
            let _ = write!(s, "{c:<w$}");
            for v in &self.confusion[i] {
                let _ = write!(s, " {v:>w$}");
            }
            let _ = writeln!(s);
        }
        s
    }

    /// `metric,class,value` rows plus `confusion,true,predicted,count`.
    pub fn to_rows(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.classes.iter().enumerate() {
            let _ = writeln!(s, "precision,{c},{}", self.precision[i]);
            let _ = writeln!(s, "recall,{c},{}", self.recall[i]);
            let _ = writeln!(s, "f1,{c},{}", self.f1[i]);
            let _ = writeln!(s, "support,{c},{}", self.support[i]);
        }
        let _ = writeln!(s, "macro_precision,,{}", self.macro_precision);
        let _ = writeln!(s, "macro_recall,,{}", self.macro_recall);
        let _ = writeln!(s, "macro_f1,,{}", self.macro_f1);
        let _ = writeln!(s, "accuracy,,{}", self.accuracy);
        for (i, t) in self.classes.iter().enumerate() {
            for (j, p) in self.classes.iter().enumerate() {
                let _ = writeln!(s, "confusion,{t},{p},{}", self.confusion[i][j]);
            }
        }
        s
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{validation_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub subject: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n: usize,
}

/// Classification metrics. `confusion[p][t]` counts frames predicted `p`
/// with truth `t` (rows predicted, columns truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_classes: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub per_subject: Vec<SubjectMetrics>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != pred.len() {
        return Err(validation_err!("{} labels vs {} predictions", truth.len(), pred.len()));
    }
    let mut c = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= n_classes || p >= n_classes {
            return Err(validation_err!("class id out of range for {n_classes} classes"));
        }
        c[p][t] += 1;
    }
    Ok(c)
}

pub fn accuracy(confusion: &[Vec<usize>]) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    let hits: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    hits as f64 / total as f64
}

/// Unweighted mean of per-class F1 over classes that occur in the truth or
/// the predictions.
pub fn macro_f1(confusion: &[Vec<usize>]) -> f64 {
    let n = confusion.len();
    let mut sum = 0.0;
    let mut seen = 0;
    for k in 0..n {
        let tp = confusion[k][k] as f64;
        let predicted: usize = confusion[k].iter().sum();
        let actual: usize = confusion.iter().map(|row| row[k]).sum();
        if predicted == 0 && actual == 0 {
            continue;
        }
        seen += 1;
        sum += 2.0 * tp / (predicted + actual) as f64;
    }
    if seen == 0 {
        0.0
    } else {
        sum / seen as f64
    }
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl MetricsReport {
    /// Builds a report from aligned truth, predictions and subject tags.
    /// Subjects appear in first-seen order.
    pub fn from_predictions(truth: &[usize], pred: &[usize], subjects: &[&str], n_classes: usize) -> Result<Self> {
        if truth.is_empty() {
            return Err(validation_err!("cannot evaluate an empty dataset"));
        }
        if subjects.len() != truth.len() {
            return Err(validation_err!("{} subject tags for {} labels", subjects.len(), truth.len()));
        }
        let confusion = confusion_matrix(truth, pred, n_classes)?;
        let mut order: Vec<&str> = Vec::new();
        for s in subjects {
            if !order.contains(s) {
                order.push(s);
            }
        }
        let per_subject = order
            .iter()
            .map(|&s| {
                let (t, p): (Vec<usize>, Vec<usize>) = (0..truth.len())
                    .filter(|&i| subjects[i] == s)
                    .map(|i| (truth[i], pred[i]))
                    .unzip();
                let c = confusion_matrix(&t, &p, n_classes)?;
                Ok(SubjectMetrics {
                    subject: s.to_string(),
                    accuracy: accuracy(&c),
                    macro_f1: macro_f1(&c),
                    n: t.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(confusion, per_subject))
    }

    /// Merges per-subject reports (one model each) into one: confusions
    /// add, subject lists concatenate.
    pub fn merge(reports: &[MetricsReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| validation_err!("nothing to merge"))?;
        let n = first.n_classes;
        let mut confusion = vec![vec![0; n]; n];
        let mut per_subject = Vec::new();
        for r in reports {
            if r.n_classes != n {
                return Err(validation_err!("class counts differ: {} vs {n}", r.n_classes));
            }
            for (row, other) in confusion.iter_mut().zip(&r.confusion) {
                row.iter_mut().zip(other).for_each(|(a, b)| *a += b);
            }
            per_subject.extend(r.per_subject.iter().cloned());
        }
        Ok(Self::assemble(confusion, per_subject))
    }

    fn assemble(confusion: Vec<Vec<usize>>, per_subject: Vec<SubjectMetrics>) -> Self {
        let accs: Vec<f64> = per_subject.iter().map(|s| s.accuracy).collect();
        let f1s: Vec<f64> = per_subject.iter().map(|s| s.macro_f1).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        let (mean_f1, std_f1) = mean_std(&f1s);
        MetricsReport {
            n_classes: confusion.len(),
            accuracy: accuracy(&confusion),
            macro_f1: macro_f1(&confusion),
            confusion,
            per_subject,
            mean_accuracy,
            std_accuracy,
            mean_f1,
            std_f1,
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Confusion as CSV with a `pred\truth` header row.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("pred\\truth");
        for t in 0..self.n_classes {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (p, row) in self.confusion.iter().enumerate() {
            out.push_str(&p.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

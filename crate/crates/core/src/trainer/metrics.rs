use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Macro averages over the classes present in the split.
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Macro one-vs-rest.
    pub auc: f64,
}

impl Metrics {
    fn values(&self) -> [f64; 5] {
        [self.accuracy, self.f1, self.precision, self.recall, self.auc]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Metrics {
            accuracy: v[0],
            f1: v[1],
            precision: v[2],
            recall: v[3],
            auc: v[4],
        }
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mann–Whitney form of the area under the ROC curve; tied scores count ½.
fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

pub fn compute_metrics(logits: &Tensor, labels: &[usize], classes: usize) -> Metrics {
    let n = labels.len();
    let preds: Vec<usize> = (0..n).map(|i| argmax(logits.row(i))).collect();
    let probs: Vec<Vec<f64>> = (0..n).map(|i| softmax(logits.row(i))).collect();
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    let (mut f1s, mut precs, mut recs, mut aucs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        let support = labels.iter().filter(|&&y| y == c).count();
        if support == 0 {
            warn!("class {c} is absent from the split and is left out of macro averages");
            continue;
        }
        let tp = (0..n).filter(|&i| preds[i] == c && labels[i] == c).count() as f64;
        let predicted = preds.iter().filter(|&&p| p == c).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        precs.push(precision);
        recs.push(recall);
        f1s.push(f1);
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        if let Some(a) = binary_auc(&scores, &positive) {
            aucs.push(a);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let auc = if aucs.is_empty() {
        warn!("only one class present; AUC reported as 0.5");
        0.5
    } else {
        mean(&aucs)
    };
    Metrics {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        f1: mean(&f1s),
        precision: mean(&precs),
        recall: mean(&recs),
        auc,
    }
}

/// Mean and sample standard deviation across folds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mean: Metrics,
    pub std: Metrics,
    pub folds: usize,
}

impl MetricsSummary {
    pub fn from_folds(per_fold: &[Metrics]) -> Self {
        let n = per_fold.len();
        let mut mean = [0.0; 5];
        let mut std = [0.0; 5];
        if n > 0 {
            for m in per_fold {
                for (a, v) in mean.iter_mut().zip(m.values()) {
                    *a += v / n as f64;
                }
            }
        }
        if n > 1 {
            for m in per_fold {
                for ((s, v), mu) in std.iter_mut().zip(m.values()).zip(mean) {
                    *s += (v - mu).powi(2) / (n - 1) as f64;
                }
            }
            std.iter_mut().for_each(|s| *s = s.sqrt());
        }
        MetricsSummary {
            mean: Metrics::from_values(mean),
            std: Metrics::from_values(std),
            folds: n,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow<'a> {
    pub variant: &'a str,
    pub fold: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
}

/// `variant,fold,accuracy,f1,precision,recall,auc`.
pub fn metrics_csv(rows: &[(String, usize, Metrics)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (variant, fold, m) in rows {
        w.serialize(MetricRow {
            variant,
            fold: *fold,
            accuracy: m.accuracy,
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            auc: m.auc,
        })
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

pub(crate) fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| csv_error(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv writes utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits_for(preds: &[usize], classes: usize) -> Tensor {
        let rows: Vec<Vec<f64>> = preds
            .iter()
            .map(|&p| (0..classes).map(|c| if c == p { 1.0 } else { 0.0 }).collect())
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        let m = compute_metrics(&logits_for(&y, 3), &y, 3);
        assert_eq!(m, Metrics { accuracy: 1.0, f1: 1.0, precision: 1.0, recall: 1.0, auc: 1.0 });
    }

    #[test]
    fn constant_predictor_on_balanced_binary() {
        let y = [0, 1, 0, 1, 1, 0];
        let m = compute_metrics(&Tensor::zeros(&[6, 2]), &y, 2);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.auc, 0.5);
    }

    #[test]
    fn six_sample_confusion_matrix() {
        // truth 0 0 1 1 2 2, predicted 0 1 1 1 2 0
        //   class 0: tp 1, fp 1, fn 1 → p ½, r ½, f1 ½
        //   class 1: tp 2, fp 1, fn 0 → p ⅔, r 1, f1 ⅘
        //   class 2: tp 1, fp 0, fn 1 → p 1, r ½, f1 ⅔
        let y = [0, 0, 1, 1, 2, 2];
        let m = compute_metrics(&logits_for(&[0, 1, 1, 1, 2, 0], 3), &y, 3);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.precision - (0.5 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-15);
        assert!((m.recall - (0.5 + 1.0 + 0.5) / 3.0).abs() < 1e-15);
        assert!((m.f1 - (0.5 + 0.8 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_excluded() {
        let y = [0, 0, 1, 1];
        let m = compute_metrics(&logits_for(&y, 3), &y, 3);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn auc_ties_count_half() {
        assert_eq!(binary_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(binary_auc(&[0.1, 0.9, 0.4], &[false, true, true]), Some(1.0));
        assert_eq!(binary_auc(&[0.1, 0.9, 0.4, 0.4], &[true, false, true, false]), Some(0.125));
        assert_eq!(binary_auc(&[0.3], &[true]), None);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn summary_uses_sample_std() {
        let a = Metrics { accuracy: 0.8, ..Metrics::default() };
        let b = Metrics { accuracy: 0.6, ..Metrics::default() };
        let s = MetricsSummary::from_folds(&[a, b]);
        assert!((s.mean.accuracy - 0.7).abs() < 1e-15);
        assert!((s.std.accuracy - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(MetricsSummary::from_folds(&[a]).std.accuracy, 0.0);
    }

    #[test]
    fn csv_header_and_rows() {
        let text = metrics_csv(&[("full".into(), 0, Metrics { accuracy: 1.0, ..Metrics::default() })]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("variant,fold,accuracy,f1,precision,recall,auc"));
        assert_eq!(lines.next(), Some("full,0,1.0,0.0,0.0,0.0,0.0"));
    }
}

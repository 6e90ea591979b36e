use serde::Serialize;

use super::config::{TrainConfig, Variant};
use super::metrics::{csv_error, finish_csv, Metrics, MetricsSummary};
use super::train::run_cross_validation;
use crate::data::{DatasetManifest, KnowledgeBase};
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: &'static str,
    pub summary: MetricsSummary,
    pub per_fold: Vec<(usize, Metrics)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Mean accuracy of `v` minus that of the full model.
    pub fn delta_accuracy(&self, v: Variant) -> Option<f64> {
        let full = self.row(Variant::Full)?.summary.mean.accuracy;
        Some(self.row(v)?.summary.mean.accuracy - full)
    }
}

/// Cross-validates each variant with otherwise identical settings.
pub fn run_ablation_suite(
    m: &DatasetManifest,
    kb: Option<&KnowledgeBase>,
    base: &TrainConfig,
    variants: &[Variant],
    workers: usize,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = TrainConfig {
            variant,
            ..base.clone()
        };
        let report = run_cross_validation(m, kb, &cfg, workers)?;
        rows.push(AblationRow {
            variant,
            label: variant.label(),
            summary: report.summary,
            per_fold: report.folds.iter().map(|f| (f.fold, f.metrics)).collect(),
        });
    }
    Ok(AblationReport { rows })
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    variant: &'a str,
    accuracy_mean: f64,
    accuracy_std: f64,
    f1_mean: f64,
    f1_std: f64,
    delta_acc: Option<f64>,
}

/// One row per variant; `delta_acc` is empty when the full model was not run.
pub fn ablation_summary_csv(report: &AblationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(SummaryRow {
            variant: r.label,
            accuracy_mean: r.summary.mean.accuracy,
            accuracy_std: r.summary.std.accuracy,
            f1_mean: r.summary.mean.f1,
            f1_std: r.summary.std.f1,
            delta_acc: report.delta_accuracy(r.variant),
        })
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: Variant, acc: f64) -> AblationRow {
        let m = Metrics {
            accuracy: acc,
            ..Metrics::default()
        };
        AblationRow {
            variant,
            label: variant.label(),
            summary: MetricsSummary::from_folds(&[m]),
            per_fold: vec![(0, m)],
        }
    }

    #[test]
    fn summary_csv_uses_display_labels_and_deltas() {
        let report = AblationReport {
            rows: vec![row(Variant::Full, 0.75), row(Variant::SpatialOnly, 0.5)],
        };
        let csv = ablation_summary_csv(&report).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "variant,accuracy_mean,accuracy_std,f1_mean,f1_std,delta_acc");
        assert_eq!(lines[1], "Q-FSRU (Full),0.75,0.0,0.0,0.0,0.0");
        assert_eq!(lines[2], "Spatial-only Fusion,0.5,0.0,0.0,0.0,-0.25");
    }

    #[test]
    fn delta_is_blank_without_full_row() {
        let report = AblationReport {
            rows: vec![row(Variant::NoFrequency, 0.5)],
        };
        let csv = ablation_summary_csv(&report).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",0.0,"));
    }
}

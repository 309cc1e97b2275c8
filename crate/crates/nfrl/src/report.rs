//! Run artifacts: training history, per-fold metrics and the run summary.
//!
//! Everything here except the `elapsed_ms` history column is a pure function
//! of the configuration and seed.

use std::fmt::Write as _;
use std::path::Path;

use nfrl_core::metrics::{macro_f1, rule_stats, RuleStats, ZeroSupport};
use nfrl_core::rules::{extract_rules, simplify};
use nfrl_core::train::TrainHistory;
use nfrl_core::{Dataset, NfrlModel, TrainConfig};

use crate::io::{self, IoError};

pub const HISTORY_COLUMNS: [&str; 7] = ["epoch", "lr", "train_loss", "train_f1", "val_f1", "live_rules", "elapsed_ms"];

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

fn history_row(r: &nfrl_core::train::EpochRecord) -> Vec<String> {
    vec![
        r.epoch.to_string(),
        num(r.lr),
        num(r.train_loss),
        num(r.train_f1),
        num(r.val_f1),
        r.live_rules.to_string(),
        r.elapsed_ms.to_string(),
    ]
}

/// One fold's history.
pub fn history_csv(history: &TrainHistory) -> String {
    csv_text(&HISTORY_COLUMNS, history.epochs.iter().map(history_row))
}

/// Histories of several folds, with a leading `fold` column.
pub fn combined_history_csv(histories: &[(usize, &TrainHistory)]) -> String {
    let mut header = vec!["fold"];
    header.extend(HISTORY_COLUMNS);
    let rows = histories.iter().flat_map(|&(fold, h)| {
        h.epochs.iter().map(move |r| {
            let mut row = vec![fold.to_string()];
            row.extend(history_row(r));
            row
        })
    });
    csv_text(&header, rows)
}

/// Held-out and training-split quality of one trained fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub train_f1: f64,
    pub test_f1: f64,
    pub test_accuracy: f64,
    pub rule_count: usize,
    pub simplified_rule_count: usize,
    pub avg_rule_length: f64,
    pub train_stats: RuleStats,
    pub test_stats: RuleStats,
}

pub fn evaluate_fold(fold: usize, model: &NfrlModel, train: &Dataset, test: &Dataset) -> nfrl_core::Result<FoldResult> {
    let classes = model.net.classes();
    let train_bits = model.binarizer.transform_dataset(train);
    let test_bits = model.binarizer.transform_dataset(test);
    let train_pred = model.predict_bits(&train_bits);
    let test_pred = model.predict_bits(&test_bits);
    let correct = test_pred.iter().zip(test.labels()).filter(|(p, t)| p == t).count();
    let rules = extract_rules(&model.net);
    Ok(FoldResult {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        train_f1: macro_f1(&train_pred, train.labels(), classes, ZeroSupport::Skip)?,
        test_f1: macro_f1(&test_pred, test.labels(), classes, ZeroSupport::Skip)?,
        test_accuracy: correct as f64 / test.len() as f64,
        rule_count: rules.len(),
        simplified_rule_count: simplify(&rules).len(),
        avg_rule_length: rules.avg_length(),
        train_stats: rule_stats(&rules, &train_bits, train.labels()),
        test_stats: rule_stats(&rules, &test_bits, test.labels()),
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), |v| format!("{v}"))
}

const METRIC_COLUMNS: [&str; 15] = [
    "fold",
    "train_size",
    "test_size",
    "train_f1",
    "test_f1",
    "test_accuracy",
    "rules",
    "rules_simplified",
    "avg_rule_length",
    "train_coverage",
    "train_rule_accuracy",
    "train_diversity",
    "test_coverage",
    "test_rule_accuracy",
    "test_diversity",
];

fn metric_values(r: &FoldResult) -> [Option<f64>; 14] {
    [
        Some(r.train_size as f64),
        Some(r.test_size as f64),
        Some(r.train_f1),
        Some(r.test_f1),
        Some(r.test_accuracy),
        Some(r.rule_count as f64),
        Some(r.simplified_rule_count as f64),
        Some(r.avg_rule_length),
        Some(r.train_stats.mean_coverage),
        r.train_stats.mean_accuracy,
        r.train_stats.diversity,
        Some(r.test_stats.mean_coverage),
        r.test_stats.mean_accuracy,
        r.test_stats.diversity,
    ]
}

/// Mean and population standard deviation of the defined values.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Per-fold rows followed by `mean` and `std` rows.
pub fn metrics_csv(results: &[FoldResult]) -> String {
    let mut rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![r.fold.to_string()];
            row.extend(metric_values(r).iter().map(|&v| opt(v)));
            row
        })
        .collect();
    let columns: Vec<Option<(f64, f64)>> =
        (0..METRIC_COLUMNS.len() - 1).map(|c| mean_std(results.iter().map(|r| metric_values(r)[c]))).collect();
    for (label, pick) in [("mean", 0), ("std", 1)] {
        let mut row = vec![label.to_string()];
        row.extend(columns.iter().map(|ms| opt(ms.map(|(m, s)| if pick == 0 { m } else { s }))));
        rows.push(row);
    }
    csv_text(&METRIC_COLUMNS, rows)
}

pub fn config_line(c: &TrainConfig) -> String {
    format!(
        "k1={} k2={} bins={} binning={} l2={:e} lr={:e} batch={} epochs={} decay_every={} decay_factor={} seed={} tie_scope={:?}",
        c.k1,
        c.k2,
        c.bins,
        c.binning,
        c.l2,
        c.lr,
        c.batch,
        c.epochs,
        c.decay_every,
        c.decay_factor,
        c.seed,
        c.tie_scope
    )
    .to_lowercase()
}

/// Human-readable run summary; contains no timing.
pub fn summary_text(data_name: &str, folds: usize, config: &TrainConfig, results: &[FoldResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "data: {data_name}");
    let _ = writeln!(s, "folds: {folds}");
    let _ = writeln!(s, "config: {}", config_line(config));
    let _ = writeln!(s);
    let _ = writeln!(s, "fold  train_f1  test_f1   test_acc  rules  simplified  avg_len");
    for r in results {
        let _ = writeln!(
            s,
            "{:<4}  {:.6}  {:.6}  {:.6}  {:<5}  {:<10}  {:.3}",
            r.fold, r.train_f1, r.test_f1, r.test_accuracy, r.rule_count, r.simplified_rule_count, r.avg_rule_length
        );
    }
    let _ = writeln!(s);
    let line = |s: &mut String, name: &str, ms: Option<(f64, f64)>| {
        let _ = match ms {
            Some((m, d)) => writeln!(s, "{name}: {m:.6} ± {d:.6}"),
            None => writeln!(s, "{name}: nan"),
        };
    };
    line(&mut s, "test macro-F1", mean_std(results.iter().map(|r| Some(r.test_f1))));
    line(&mut s, "test accuracy", mean_std(results.iter().map(|r| Some(r.test_accuracy))));
    line(&mut s, "train macro-F1", mean_std(results.iter().map(|r| Some(r.train_f1))));
    line(&mut s, "rules", mean_std(results.iter().map(|r| Some(r.rule_count as f64))));
    line(&mut s, "avg rule length", mean_std(results.iter().map(|r| Some(r.avg_rule_length))));
    line(&mut s, "train coverage", mean_std(results.iter().map(|r| Some(r.train_stats.mean_coverage))));
    line(&mut s, "train diversity", mean_std(results.iter().map(|r| r.train_stats.diversity)));
    s
}

pub fn write_run_files(out: &Path, summary: &str, metrics: &str, history: &str) -> Result<(), IoError> {
    io::write_text(&out.join("summary.txt"), summary)?;
    io::write_text(&out.join("metrics.csv"), metrics)?;
    io::write_text(&out.join("history.csv"), history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfrl_core::train::EpochRecord;

    #[test]
    fn history_columns() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                lr: 0.01,
                train_loss: 0.5,
                train_f1: 0.75,
                val_f1: f64::NAN,
                live_rules: 3,
                elapsed_ms: 12,
            }],
        };
        assert_eq!(history_csv(&h), "epoch,lr,train_loss,train_f1,val_f1,live_rules,elapsed_ms\n1,0.01,0.5,0.75,nan,3,12\n");
        assert!(combined_history_csv(&[(2, &h)]).starts_with("fold,epoch,"));
        assert!(combined_history_csv(&[(2, &h)]).ends_with("\n2,1,0.01,0.5,0.75,nan,3,12\n"));
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std([Some(1.0), Some(3.0), None]), Some((2.0, 1.0)));
        assert_eq!(mean_std([None]), None);
    }
}

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{LengthStratum, MetricsReport, StratumF1};

/// Scores of one inference method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub metrics: MetricsReport,
    pub strata: Vec<StratumF1>,
}

/// Aligned text table: method, accuracy, F1, precision, recall.
pub fn metrics_table(reports: &[MethodReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>9}  {:>8}", "Method", "Accuracy", "F1", "Precision", "Recall");
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.3}  {:>8.3}  {:>9.3}  {:>8.3}",
            r.method, m.accuracy, m.macro_f1, m.macro_precision, m.macro_recall
        );
    }
    out
}

/// Aligned text table of macro F1 per length stratum; blank cells are
/// empty strata.
pub fn strata_table(reports: &[MethodReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Method");
    for s in LengthStratum::ALL {
        let _ = write!(out, "  {:>10}", s.name());
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<width$}", r.method);
        for s in LengthStratum::ALL {
            match r.strata.iter().find(|x| x.stratum == s) {
                Some(x) => {
                    let _ = write!(out, "  {:>10.3}", x.macro_f1);
                }
                None => {
                    let _ = write!(out, "  {:>10}", "");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn metrics_csv(reports: &[MethodReport]) -> String {
    let mut out = String::from("method,accuracy,macro_f1,macro_precision,macro_recall,micro_f1,weighted_f1\n");
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, m.accuracy, m.macro_f1, m.macro_precision, m.macro_recall, m.micro_f1, m.weighted_f1
        );
    }
    out
}

pub fn strata_csv(reports: &[MethodReport]) -> String {
    let mut out = String::from("method,stratum,count,macro_f1\n");
    for r in reports {
        for s in &r.strata {
            let _ = writeln!(out, "{},{},{},{}", r.method, s.stratum.name(), s.count, s.macro_f1);
        }
    }
    out
}

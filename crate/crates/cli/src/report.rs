//! Comparison tables and ROC coordinates from one or more results manifests.
//!
//! Output files:
//! * `summary.csv`: one row per (manifest, method) with AUC and its bootstrap
//!   interval, then sensitivity, specificity, PPV and NPV (binary tasks, expert
//!   positive) with Wilson intervals, then micro and macro accuracy;
//! * `per_class.csv` (3-class tasks): one row per (method, class) with the
//!   one-vs-rest rates;
//! * `roc_<method>.csv`: `fpr,tpr,threshold` (binary) or
//!   `class,fpr,tpr,threshold` (one-vs-rest per class).
//!
//! Numbers are written in shortest round-trip form, so parsing a table cell
//! gives back exactly the value stored in the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use surgskill_core::eval::{roc_curve, ClassRates, Rate};

use crate::error::{RunError, RunResult, Stage};
use crate::experiment::{MethodResult, ResultsManifest};

pub const SUMMARY_HEADER: &str = "config_hash,task,method,n,auc,auc_lo,auc_hi,\
sens,sens_lo,sens_hi,spec,spec_lo,spec_hi,ppv,ppv_lo,ppv_hi,npv,npv_lo,npv_hi,\
micro_acc,macro_acc";

pub const PER_CLASS_HEADER: &str = "config_hash,task,method,class,\
sens,sens_lo,sens_hi,spec,spec_lo,spec_hi,ppv,ppv_lo,ppv_hi,npv,npv_lo,npv_hi";

fn rate_cells(r: &Option<Rate>) -> String {
    match r {
        Some(r) => format!("{},{},{}", r.value, r.lower, r.upper),
        None => ",,".into(),
    }
}

fn rates_cells(r: Option<&ClassRates>) -> String {
    match r {
        Some(r) => [&r.sensitivity, &r.specificity, &r.ppv, &r.npv].map(rate_cells).join(","),
        None => vec![",,"; 4].join(","),
    }
}

pub fn summary_row(m: &ResultsManifest, r: &MethodResult) -> String {
    let e = &r.outcome.report;
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        m.config_hash,
        m.task.name(),
        r.method.name(),
        e.examples,
        e.auc,
        e.auc_ci.0,
        e.auc_ci.1,
        rates_cells(e.positive.as_ref()),
        e.micro_accuracy,
        e.macro_accuracy
    )
}

/// ROC points per class (binary tasks: one curve on `s1 − s0`).
pub fn roc_csv(m: &ResultsManifest, r: &MethodResult) -> RunResult<String> {
    let labels = &m.corpus.labels;
    let preds = &r.outcome.predictions;
    let curve = |scores: &[f64], pos: usize| {
        let truth: Vec<bool> = preds.iter().map(|p| labels[p.video] == pos).collect();
        roc_curve(scores, &truth).map_err(|e| RunError::from_core(Stage::Report, e))
    };
    let mut out = String::new();
    if m.task.n_classes() == 2 {
        out.push_str("fpr,tpr,threshold\n");
        let scores: Vec<f64> = preds.iter().map(|p| p.prediction.binary_score()).collect();
        for p in curve(&scores, 1)? {
            writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold).expect("string write");
        }
    } else {
        out.push_str("class,fpr,tpr,threshold\n");
        for c in 0..m.task.n_classes() {
            if !labels.contains(&c) || labels.iter().all(|&l| l == c) {
                continue;
            }
            let scores: Vec<f64> = preds.iter().map(|p| p.prediction.scores[c]).collect();
            for p in curve(&scores, c)? {
                writeln!(out, "{c},{},{},{}", p.fpr, p.tpr, p.threshold).expect("string write");
            }
        }
    }
    Ok(out)
}

/// Writes the comparison tables for `manifests` into `out`; returns the files written.
pub fn report(manifests: &[ResultsManifest], out: &Path) -> RunResult<Vec<PathBuf>> {
    let first = manifests
        .first()
        .ok_or_else(|| RunError::Config("report needs at least one manifest".into()))?;
    if let Some(other) = manifests.iter().find(|m| m.task != first.task) {
        return Err(RunError::data(
            Stage::Report,
            format!("cannot compare {} with {} results", first.task.name(), other.task.name()),
        ));
    }
    fs::create_dir_all(out).map_err(|e| RunError::io(Stage::Report, out, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> RunResult<()> {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| RunError::io(Stage::Report, &p, e))?;
        written.push(p);
        Ok(())
    };

    let mut summary = format!("{SUMMARY_HEADER}\n");
    for m in manifests {
        for r in &m.methods {
            summary.push_str(&summary_row(m, r));
            summary.push('\n');
        }
    }
    write("summary.csv".into(), summary)?;

    if first.task.n_classes() > 2 {
        let mut table = format!("{PER_CLASS_HEADER}\n");
        for m in manifests {
            for r in &m.methods {
                for c in &r.outcome.report.per_class {
                    writeln!(
                        table,
                        "{},{},{},{},{}",
                        m.config_hash,
                        m.task.name(),
                        r.method.name(),
                        c.class,
                        rates_cells(Some(c))
                    )
                    .expect("string write");
                }
            }
        }
        write("per_class.csv".into(), table)?;
    }

    for (i, m) in manifests.iter().enumerate() {
        for r in &m.methods {
            let name = if manifests.len() == 1 {
                format!("roc_{}.csv", r.method.name())
            } else {
                format!("roc_{}_{i}.csv", r.method.name())
            };
            write(name, roc_csv(m, r)?)?;
        }
    }
    Ok(written)
}

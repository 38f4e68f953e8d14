use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use r2p_core::dump::TreeDocument;
use r2p_core::metrics::RunMetrics;

use crate::{CliError, Method, OutputFormat, Result};

/// Per-run metric columns of `runs.csv`, after `run` and `method`.
pub const METRIC_COLUMNS: [&str; 8] = [
    "v_across",
    "v_in",
    "v_in_normalized",
    "n_subgroups",
    "ci_width",
    "coverage",
    "overlap",
    "pehe_root",
];

const SUMMARY_ONLY: [&str; 2] = ["v_pop", "ci_width_leaf"];

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub method: Method,
    pub metrics: RunMetrics,
}

fn metric(m: &RunMetrics, name: &str) -> f64 {
    match name {
        "v_across" => m.v_across,
        "v_in" => m.v_in,
        "v_pop" => m.v_pop,
        "v_in_normalized" => m.v_in_normalized,
        "n_subgroups" => m.n_subgroups as f64,
        "ci_width" => m.ci_width,
        "ci_width_leaf" => m.ci_width_leaf,
        "coverage" => m.coverage,
        "overlap" => m.overlap,
        "pehe_root" => m.pehe_root,
        other => unreachable!("unknown metric {other}"),
    }
}

/// Mean and standard error over the finite values of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub n_finite: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let n = finite.len();
        if n == 0 {
            return Self {
                mean: f64::INFINITY,
                stderr: f64::INFINITY,
                n_finite: 0,
            };
        }
        let mean = finite.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            stderr,
            n_finite: n,
        }
    }

    fn to_json(self) -> Value {
        let num = |v: f64| {
            if v.is_finite() {
                json!(v)
            } else {
                json!("inf")
            }
        };
        json!({ "mean": num(self.mean), "stderr": num(self.stderr), "n_finite": self.n_finite })
    }
}

pub fn aggregate(
    records: &[RunRecord],
    methods: &[Method],
) -> BTreeMap<Method, BTreeMap<String, Aggregate>> {
    methods
        .iter()
        .map(|&method| {
            let rows: Vec<&RunMetrics> = records
                .iter()
                .filter(|r| r.method == method)
                .map(|r| &r.metrics)
                .collect();
            let per_metric = METRIC_COLUMNS
                .iter()
                .chain(&SUMMARY_ONLY)
                .map(|&name| {
                    let values: Vec<f64> = rows.iter().map(|m| metric(m, name)).collect();
                    (name.to_owned(), Aggregate::of(&values))
                })
                .collect();
            (method, per_metric)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub per_run: Vec<RunRecord>,
    pub aggregate: BTreeMap<Method, BTreeMap<String, Aggregate>>,
    /// Tree of each record, aligned with `per_run`.
    pub trees: Vec<TreeDocument>,
}

impl ExperimentReport {
    pub fn summary_json(&self) -> Value {
        let methods: serde_json::Map<String, Value> = self
            .aggregate
            .iter()
            .map(|(m, metrics)| {
                let inner: serde_json::Map<String, Value> = metrics
                    .iter()
                    .map(|(k, a)| (k.clone(), a.to_json()))
                    .collect();
                (m.name().to_owned(), Value::Object(inner))
            })
            .collect();
        Value::Object(methods)
    }

    pub fn write_runs_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["run", "method"];
        header.extend(METRIC_COLUMNS);
        w.write_record(&header)?;
        for r in &self.per_run {
            let mut row = vec![r.run.to_string(), r.method.name().to_owned()];
            row.extend(METRIC_COLUMNS.iter().map(|&name| {
                let v = metric(&r.metrics, name);
                if v.is_finite() {
                    v.to_string()
                } else {
                    String::new()
                }
            }));
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `runs.csv`, `summary.json` and, with `dump_trees`, one
/// `tree_<method>_<run>.json` per record. Creates `out_dir` if needed.
pub fn emit_reports(
    report: &ExperimentReport,
    out_dir: &Path,
    format: OutputFormat,
    dump_trees: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        report.write_runs_csv(&out_dir.join("runs.csv"))?;
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let text =
            serde_json::to_string_pretty(&report.summary_json()).expect("summary serializes");
        write_text(&out_dir.join("summary.json"), &text)?;
    }
    if dump_trees {
        for (r, tree) in report.per_run.iter().zip(&report.trees) {
            let path = out_dir.join(format!("tree_{}_{}.json", r.method.name(), r.run));
            write_text(&path, &tree.to_json())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_skips_infinite() {
        let a = Aggregate::of(&[1.0, f64::INFINITY, 3.0]);
        assert_eq!((a.mean, a.n_finite), (2.0, 2));
        assert!((a.stderr - 1.0).abs() < 1e-12);
        let none = Aggregate::of(&[f64::INFINITY]);
        assert_eq!(none.n_finite, 0);
        assert_eq!(none.to_json()["mean"], json!("inf"));
    }
}

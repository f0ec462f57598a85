use std::collections::BTreeMap;
use std::path::PathBuf;

use super::manifest::RunManifest;
use crate::error::{Error, Result};

pub const METRICS: [(&str, &str); 4] = [
    ("auc", "AUC"),
    ("logloss", "LogLoss"),
    ("cs_auuc", "CS-AUUC"),
    ("cs_qini", "CS-Qini"),
];

/// Rows appear in this order when present; others follow alphabetically.
const ROW_ORDER: [&str; 6] = [
    "S-Learner",
    "T-Learner",
    "full",
    "w/o DCR",
    "w/o X-Network",
    "w/o Treatment Tower",
];

/// Mean and sample standard deviation of one metric over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub runs: usize,
    pub stats: Vec<Option<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub dataset: String,
    pub rows: Vec<ReportRow>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One table per dataset. All manifests of a dataset must share the same
/// data hash; the first disagreeing manifest is named in the error.
pub fn aggregate(manifests: &[(PathBuf, RunManifest)]) -> Result<Vec<ReportTable>> {
    let mut by_dataset: BTreeMap<&str, Vec<&(PathBuf, RunManifest)>> = BTreeMap::new();
    for entry in manifests {
        by_dataset.entry(entry.1.dataset.as_str()).or_default().push(entry);
    }
    let mut tables = Vec::new();
    for (dataset, entries) in by_dataset {
        let reference = entries[0].1.inputs.get("data");
        if let Some((path, _)) = entries.iter().find(|(_, m)| m.inputs.get("data") != reference) {
            return Err(Error::config(format!(
                "manifest {} evaluates a different {dataset} dataset than {}",
                path.display(),
                entries[0].0.display()
            )));
        }
        let mut groups: BTreeMap<&str, Vec<&RunManifest>> = BTreeMap::new();
        for (_, m) in &entries {
            groups.entry(m.label.as_str()).or_default().push(m);
        }
        let mut rows: Vec<ReportRow> = groups
            .into_iter()
            .map(|(label, runs)| ReportRow {
                label: label.to_string(),
                runs: runs.len(),
                stats: METRICS
                    .iter()
                    .map(|(key, _)| {
                        let v: Vec<f64> = runs.iter().filter_map(|m| m.results.get(*key).copied()).collect();
                        (!v.is_empty()).then(|| mean_sd(&v))
                    })
                    .collect(),
            })
            .collect();
        let rank = |l: &str| ROW_ORDER.iter().position(|r| *r == l).unwrap_or(ROW_ORDER.len());
        rows.sort_by(|a, b| rank(&a.label).cmp(&rank(&b.label)).then(a.label.cmp(&b.label)));
        tables.push(ReportTable {
            dataset: dataset.to_string(),
            rows,
        });
    }
    Ok(tables)
}

fn cell(s: Option<(f64, f64)>, key: &str) -> String {
    match s {
        None => "-".into(),
        Some((m, sd)) if key.starts_with("cs_") => format!("{m:.2} ± {sd:.2}"),
        Some((m, sd)) => format!("{m:.4} ± {sd:.4}"),
    }
}

pub fn render_table(tables: &[ReportTable]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&format!("dataset {}\n", t.dataset));
        let mut lines = vec![std::iter::once("model".to_string())
            .chain(std::iter::once("runs".to_string()))
            .chain(METRICS.iter().map(|(_, h)| h.to_string()))
            .collect::<Vec<_>>()];
        for r in &t.rows {
            let mut line = vec![r.label.clone(), r.runs.to_string()];
            line.extend(r.stats.iter().zip(METRICS).map(|(s, (k, _))| cell(*s, k)));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        for l in &lines {
            let padded: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn render_csv(tables: &[ReportTable]) -> String {
    let mut out = String::from("dataset,model,runs");
    for (k, _) in METRICS {
        out.push_str(&format!(",{k}_mean,{k}_sd"));
    }
    out.push('\n');
    for t in tables {
        for r in &t.rows {
            out.push_str(&format!("{},{},{}", t.dataset, r.label, r.runs));
            for s in &r.stats {
                match s {
                    Some((m, sd)) => out.push_str(&format!(",{m},{sd}")),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
    }
    out
}

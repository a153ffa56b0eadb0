//! Evaluation reports: JSON and TSV serialization, merging several reports
//! into comparison tables, and rendering the published reference column.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, BenchmarkDataset};
use crate::error::{Error, Result};
use crate::metrics::{macro_average, TagMetrics};

pub const SCHEMA_VERSION: u32 = 1;

/// Column order of the per-tag TSV.
pub const TSV_FIELDS: [&str; 8] = ["model", "dataset", "split", "deformation", "tag", "n_pos", "roc_auc", "pr_auc"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagResult {
    pub tag: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    /// Single-class tag in this split; excluded from the macro means.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: u32,
    pub model: String,
    pub dataset: String,
    pub split: String,
    pub deformation: String,
    pub n_clips: usize,
    pub per_tag: Vec<TagResult>,
    pub macro_roc_auc: Option<f64>,
    pub macro_pr_auc: Option<f64>,
}

impl EvalReport {
    pub fn from_metrics(
        model: &str,
        dataset: &str,
        split: &str,
        deformation: &str,
        vocab: &[String],
        metrics: &[TagMetrics],
        n_clips: usize,
    ) -> Result<Self> {
        if vocab.len() != metrics.len() {
            return Err(Error::InvalidConfig(format!("{} tag names for {} metrics", vocab.len(), metrics.len())));
        }
        let per_tag = vocab
            .iter()
            .zip(metrics)
            .map(|(tag, m)| TagResult {
                tag: tag.clone(),
                n_pos: m.n_pos,
                n_neg: m.n_neg,
                roc_auc: m.roc_auc,
                pr_auc: m.pr_auc,
                degenerate: m.is_degenerate(),
            })
            .collect();
        let avg = macro_average(metrics);
        Ok(EvalReport {
            schema_version: SCHEMA_VERSION,
            model: model.into(),
            dataset: dataset.into(),
            split: split.into(),
            deformation: deformation.into(),
            n_clips,
            per_tag,
            macro_roc_auc: avg.map(|a| a.0),
            macro_pr_auc: avg.map(|a| a.1),
        })
    }

    /// Tags that enter the macro means.
    pub fn evaluated_tags(&self) -> impl Iterator<Item = &TagResult> {
        self.per_tag.iter().filter(|t| !t.degenerate)
    }

    /// Checks value ranges and that the macro figures are the plain means of
    /// the non-degenerate tags.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let in_unit = |v: Option<f64>| v.is_none_or(|v| (0.0..=1.0).contains(&v));
        for t in &self.per_tag {
            if !in_unit(t.roc_auc) || !in_unit(t.pr_auc) {
                return Err(Error::Schema(format!("tag {}: AUC outside [0, 1]", t.tag)));
            }
            if t.degenerate != (t.roc_auc.is_none() || t.pr_auc.is_none()) {
                return Err(Error::Schema(format!("tag {}: degenerate flag disagrees with values", t.tag)));
            }
        }
        let used: Vec<&TagResult> = self.evaluated_tags().collect();
        let mean = |f: fn(&TagResult) -> Option<f64>| {
            (!used.is_empty()).then(|| used.iter().filter_map(|t| f(t)).sum::<f64>() / used.len() as f64)
        };
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        if !close(mean(|t| t.roc_auc), self.macro_roc_auc) || !close(mean(|t| t.pr_auc), self.macro_pr_auc) {
            return Err(Error::Schema("macro values are not the mean of per-tag values".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Schema(format!("schema_version {v} (expected {SCHEMA_VERSION})"))),
            None => return Err(Error::Schema("missing schema_version".into())),
        }
        let report: EvalReport = serde_json::from_value(value)?;
        report.validate()?;
        Ok(report)
    }

    /// One row per tag plus a trailing `macro` row whose `n_pos` sums the
    /// evaluated tags. Undefined values print as `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = TSV_FIELDS.join("\t");
        out.push('\n');
        let prefix = format!("{}\t{}\t{}\t{}", self.model, self.dataset, self.split, self.deformation);
        for t in &self.per_tag {
            let _ = writeln!(out, "{prefix}\t{}\t{}\t{}\t{}", t.tag, t.n_pos, fmt_opt(t.roc_auc), fmt_opt(t.pr_auc));
        }
        let n_pos: usize = self.evaluated_tags().map(|t| t.n_pos).sum();
        let _ = writeln!(
            out,
            "{prefix}\tmacro\t{n_pos}\t{}\t{}",
            fmt_opt(self.macro_roc_auc),
            fmt_opt(self.macro_pr_auc)
        );
        out
    }

    fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::RocAuc => self.macro_roc_auc,
            Metric::PrAuc => self.macro_pr_auc,
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| v.to_string())
}

fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Metric {
    RocAuc,
    PrAuc,
}

const METRICS: [(Metric, &str); 2] = [(Metric::RocAuc, "roc_auc"), (Metric::PrAuc, "pr_auc")];

/// First-appearance order without duplicates.
fn ordered<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = BTreeSet::new();
    items.filter(|s| seen.insert(*s)).collect()
}

fn check_mergeable(reports: &[EvalReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Schema("no reports to merge".into()));
    }
    let mut keys = BTreeSet::new();
    for r in reports {
        r.validate()?;
        if !keys.insert((&r.model, &r.dataset, &r.split, &r.deformation)) {
            return Err(Error::Schema(format!(
                "two reports for model {} on {}/{} under {}",
                r.model, r.dataset, r.split, r.deformation
            )));
        }
    }
    Ok(())
}

/// Wide comparison: one row per (model, dataset, split, metric), one column
/// per deformation.
pub fn comparison_tsv(reports: &[EvalReport]) -> Result<String> {
    check_mergeable(reports)?;
    let defs = ordered(reports.iter().map(|r| r.deformation.as_str()));
    let mut out = String::from("model\tdataset\tsplit\tmetric");
    for d in &defs {
        out.push('\t');
        out.push_str(d);
    }
    out.push('\n');
    let rows = ordered(reports.iter().map(|r| r.model.as_str()));
    for model in rows {
        let datasets = ordered(reports.iter().filter(|r| r.model == model).map(|r| r.dataset.as_str()));
        for dataset in datasets {
            let splits = ordered(
                reports
                    .iter()
                    .filter(|r| r.model == model && r.dataset == dataset)
                    .map(|r| r.split.as_str()),
            );
            for split in splits {
                for (metric, name) in METRICS {
                    let _ = write!(out, "{model}\t{dataset}\t{split}\t{name}");
                    for d in &defs {
                        let cell = reports
                            .iter()
                            .find(|r| r.model == model && r.dataset == dataset && r.split == split && r.deformation == *d)
                            .and_then(|r| r.metric(metric));
                        out.push('\t');
                        out.push_str(&fmt_opt(cell));
                    }
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}

/// Plot-ready long format: `model,deformation,metric,value`, two rows per
/// report.
pub fn long_csv(reports: &[EvalReport]) -> Result<String> {
    check_mergeable(reports)?;
    let mut out = String::from("model,deformation,metric,value\n");
    for r in reports {
        for (metric, name) in METRICS {
            let _ = writeln!(out, "{},{},{name},{}", csv_field(&r.model), csv_field(&r.deformation), fmt_opt(r.metric(metric)));
        }
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per (model, deformation) with both macro metrics.
pub fn robustness_table(reports: &[EvalReport]) -> Result<String> {
    check_mergeable(reports)?;
    let mut out = String::from("model\tdataset\tsplit\tdeformation\tmacro_roc_auc\tmacro_pr_auc\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.dataset,
            r.split,
            r.deformation,
            fmt_opt(r.macro_roc_auc),
            fmt_opt(r.macro_pr_auc)
        );
    }
    Ok(out)
}

/// Measured macro values next to the published reference numbers. Every
/// reference row appears; models without a measured report show `NA` in
/// the measured column.
pub fn baseline_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("method\tmodel\tmetric\tmeasured_dataset\tmeasured_split\tmeasured_deformation\tmeasured");
    for d in BenchmarkDataset::ALL {
        let _ = write!(out, "\tpublished_{}", d.as_str());
    }
    out.push_str("\tpublished_note\n");
    let mut line = |method: &str, model: &str, name: &str, measured: Option<&EvalReport>, metric: Metric| {
        let published = baselines::lookup(model);
        let (ds, sp, df, v) = match measured {
            Some(r) => (r.dataset.as_str(), r.split.as_str(), r.deformation.as_str(), fmt4(r.metric(metric))),
            None => ("NA", "NA", "NA", "NA".to_string()),
        };
        let _ = write!(out, "{method}\t{model}\t{name}\t{ds}\t{sp}\t{df}\t{v}");
        for d in BenchmarkDataset::ALL {
            let p = published.map(|row| {
                let sc = row.score(d);
                if metric == Metric::RocAuc { sc.roc_auc } else { sc.pr_auc }
            });
            out.push('\t');
            out.push_str(&fmt4(p));
        }
        let _ = writeln!(out, "\t{}", published.and_then(|r| r.note).unwrap_or(""));
    };
    for row in &baselines::TABLE {
        let id = row.model_id();
        let matching: Vec<&EvalReport> = reports.iter().filter(|r| r.model == id).collect();
        for (metric, name) in METRICS {
            if matching.is_empty() {
                line(row.method, &id, name, None, metric);
            }
            for r in &matching {
                line(row.method, &id, name, Some(r), metric);
            }
        }
    }
    for r in reports.iter().filter(|r| baselines::lookup(&r.model).is_none()) {
        for (metric, name) in METRICS {
            line("", &r.model, name, Some(r), metric);
        }
    }
    out
}

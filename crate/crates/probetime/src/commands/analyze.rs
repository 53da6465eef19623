//! `analyze`: turn evaluation records into score series, run every dynamics
//! metric, and write `report.json`, `series.csv` and SVG charts.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use probetime_core::baselines::REFERENCE_RUN_TAG;
use probetime_core::dynamics::{assemble_report, AnalysisConfig, BaselineLine, Curve, DynamicsReport};
use probetime_core::series::{assemble_series, EvalRecord, RunRecord, ScoreSeries};
use serde::{Deserialize, Serialize};

use super::probe::{read_ledger, LEDGER, RECORDS};
use super::{read, to_json, write};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats;
use crate::plot::{line_chart, BaselineMark, Chart, Threshold};

pub const REPORT: &str = "report.json";
pub const SERIES: &str = "series.csv";

/// Command-line overrides of the analysis section.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyzeFlags {
    pub epsilon: Option<f64>,
    pub x: Option<Vec<f64>>,
    pub ema: Option<f64>,
}

/// Everything that may differ between identical reruns lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generated_at_unix: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub metadata: Metadata,
    #[serde(flatten)]
    pub report: DynamicsReport,
}

/// Training runs are every run tag that is not a baseline or the reference.
pub fn is_training_run(run_tag: &str) -> bool {
    run_tag != REFERENCE_RUN_TAG && !run_tag.starts_with("baseline:")
}

fn baseline_label(run_tag: &str) -> String {
    run_tag.strip_prefix("baseline:").unwrap_or(run_tag).replace('_', " ")
}

/// File-name-safe form of a task or package name.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn analysis_config(cfg: &RunConfig, flags: &AnalyzeFlags) -> CliResult<AnalysisConfig> {
    let mut a = cfg.analysis.clone();
    if let Some(e) = flags.epsilon {
        a.epsilon = e;
    }
    if let Some(x) = &flags.x {
        a.x_list = x.clone();
    }
    if let Some(c) = flags.ema {
        a.ema_coefficient = c;
    }
    a.validate().map_err(|e| CliError::core("analysis", e))?;
    Ok(a)
}

/// Series of every training run, sorted by (run_tag, task_id).
pub fn build_series(records: &[RunRecord]) -> CliResult<Vec<ScoreSeries>> {
    let mut groups: BTreeMap<(&str, &str), Vec<EvalRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| is_training_run(&r.run_tag)) {
        groups
            .entry((&r.run_tag, &r.record.task_id))
            .or_default()
            .push(r.record.clone());
    }
    groups
        .into_iter()
        .map(|((run, task), recs)| assemble_series(&recs, task, run).map_err(|e| CliError::core(RECORDS, e)))
        .collect()
}

fn charts(report: &DynamicsReport, dir: &Path) -> CliResult<()> {
    for (run, curves) in &report.curves {
        let run_dir = dir.join(file_stem(run));
        let lines = report.baselines.get(run).map(Vec::as_slice).unwrap_or_default();
        let lp = report.learning_progress.get(run).map(Vec::as_slice).unwrap_or_default();
        let draw = |curve: &Curve, title: String, thresholds: Vec<Threshold>, baselines: Vec<BaselineMark>| {
            line_chart(&Chart {
                title: &title,
                raw: &curve.raw,
                smoothed: &curve.smoothed,
                thresholds,
                baselines,
            })
        };
        for curve in curves {
            let thresholds = lp
                .iter()
                .filter(|r| r.task_id == curve.task_id)
                .map(|r| Threshold {
                    label: format!("LP-{}%", r.x),
                    step: r.step_at_x,
                })
                .collect();
            let baselines = lines
                .iter()
                .filter(|b| b.task_id == curve.task_id)
                .map(|b| BaselineMark {
                    label: if b.approximate {
                        format!("{} (approx.)", b.label)
                    } else {
                        b.label.clone()
                    },
                    value: b.value,
                })
                .collect();
            let svg = draw(curve, format!("{run}: {}", curve.task_id), thresholds, baselines);
            write(&run_dir.join(format!("{}.svg", file_stem(&curve.task_id))), svg)?;
        }
        for curve in report.package_means.get(run).map(Vec::as_slice).unwrap_or_default() {
            let svg = draw(
                curve,
                format!("{run}: package {}", curve.task_id),
                Vec::new(),
                Vec::new(),
            );
            write(&run_dir.join(format!("package_{}.svg", file_stem(&curve.task_id))), svg)?;
        }
    }
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig, results: &Path, out: &Path, flags: &AnalyzeFlags) -> CliResult<DynamicsReport> {
    let analysis = analysis_config(cfg, flags)?;
    let records_path = results.join(RECORDS);
    let records = formats::read_records(&read(&records_path)?)
        .map_err(|e| CliError::core(records_path.display().to_string(), e))?;
    let series = build_series(&records)?;

    let approximate: BTreeMap<(String, String), bool> = read_ledger(&results.join(LEDGER))?
        .into_iter()
        .map(|e| ((e.run_tag, e.task_id), e.approximate))
        .collect();
    let baselines: Vec<BaselineLine> = records
        .iter()
        .filter(|r| !is_training_run(&r.run_tag))
        .map(|r| BaselineLine {
            label: baseline_label(&r.run_tag),
            task_id: r.record.task_id.clone(),
            value: r.record.metric_value,
            approximate: approximate
                .get(&(r.run_tag.clone(), r.record.task_id.clone()))
                .copied()
                .unwrap_or(false),
        })
        .collect();
    let mut packages: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &cfg.suites {
        packages
            .entry(s.package_name().to_string())
            .or_default()
            .push(s.task_id.clone());
    }

    let report =
        assemble_report(&series, &baselines, &packages, &analysis).map_err(|e| CliError::core("analyze", e))?;
    let generated_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let file = ReportFile {
        metadata: Metadata {
            generated_at_unix,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        },
        report: report.clone(),
    };
    write(&out.join(REPORT), to_json(&file))?;
    write(&out.join(SERIES), formats::write_series(&series))?;
    let plots = out.join("plots");
    if plots.exists() {
        std::fs::remove_dir_all(&plots).map_err(|e| CliError::io(&plots, e))?;
    }
    charts(&report, &plots)?;
    Ok(report)
}

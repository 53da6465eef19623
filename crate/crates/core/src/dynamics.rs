//! Learning-dynamics metrics over score series and report assembly.
//!
//! Threshold metrics pick existing checkpoint steps and never interpolate.
//! They consume raw series only; [`ema`] output is flagged as smoothed and
//! rejected with [`Error::SmoothedInput`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::series::{ScoreSeries, Step};
use crate::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_X_LIST: [f64; 3] = [90.0, 95.0, 97.0];
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_EMA_COEFFICIENT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningProgress {
    pub task_id: String,
    pub x: f64,
    pub step_at_x: Step,
    pub max_value: f64,
    /// First step attaining the maximum.
    pub max_step: Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub task_id: String,
    pub epsilon: f64,
    pub start_step: Step,
    pub end_step: Step,
    pub interval: Step,
}

fn raw_max(series: &ScoreSeries) -> Result<(Step, f64)> {
    if series.is_smoothed() {
        return Err(Error::SmoothedInput);
    }
    let mut best = series.points()[0];
    for &p in &series.points()[1..] {
        if p.1 > best.1 {
            best = p;
        }
    }
    if best.1 <= 0.0 {
        return Err(Error::UndefinedThreshold { max: best.1 });
    }
    Ok(best)
}

/// First step whose value reaches `threshold`; the maximum always qualifies.
fn first_reaching(series: &ScoreSeries, threshold: f64) -> Step {
    series
        .points()
        .iter()
        .find(|p| p.1 >= threshold)
        .map(|p| p.0)
        .expect("the maximum reaches any threshold at or below it")
}

/// Smallest step whose value is at least `x/100` of the series maximum.
pub fn learning_progress(series: &ScoreSeries, x: f64) -> Result<LearningProgress> {
    if !(x > 0.0 && x <= 100.0) {
        return Err(Error::config("x", alloc::format!("{x} is outside (0, 100]")));
    }
    let (max_step, max_value) = raw_max(series)?;
    Ok(LearningProgress {
        task_id: series.task_id().into(),
        x,
        step_at_x: first_reaching(series, x / 100.0 * max_value),
        max_value,
        max_step,
    })
}

/// Start is the first step reaching `ε·max`, end the first reaching `(1−ε)·max`.
pub fn epsilon_phase(series: &ScoreSeries, epsilon: f64) -> Result<PhaseReport> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::config(
            "epsilon",
            alloc::format!("{epsilon} is outside [0, 0.5)"),
        ));
    }
    let (_, max) = raw_max(series)?;
    let start_step = first_reaching(series, epsilon * max);
    let end_step = first_reaching(series, (1.0 - epsilon) * max);
    Ok(PhaseReport {
        task_id: series.task_id().into(),
        epsilon,
        start_step,
        end_step,
        interval: end_step - start_step,
    })
}

/// Forward exponential moving average with `s_0 = v_0`, for plotting only.
pub fn ema(series: &ScoreSeries, c: f64) -> Result<ScoreSeries> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::config(
            "ema_coefficient",
            alloc::format!("{c} is outside (0, 1]"),
        ));
    }
    let mut prev: Option<f64> = None;
    let points = series
        .points()
        .iter()
        .map(|&(s, v)| {
            let out = match prev {
                None => v,
                Some(p) => c * v + (1.0 - c) * p,
            };
            prev = Some(out);
            (s, out)
        })
        .collect();
    ScoreSeries::build(series.task_id(), series.run_tag(), points, true)
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("series values are finite")
}

/// Pairs `n·(n−1)/2` over runs of equal adjacent values in sorted data.
fn tied_pairs(sorted: impl Iterator<Item = bool>) -> u64 {
    let (mut total, mut run) = (0u64, 0u64);
    for same_as_prev in sorted {
        if same_as_prev {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
    }
    total + run * (run + 1) / 2
}

/// Sort `v` by value and return the number of inversions removed.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if cmp(v[j], v[i]) == Ordering::Less {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall τ-b over the steps both series share, computed in `O(n log n)`.
///
/// Returns `Ok(None)` when either series is constant on the shared steps.
pub fn kendall_tau(a: &ScoreSeries, b: &ScoreSeries) -> Result<Option<f64>> {
    let mut pairs: Vec<(f64, f64)> = a
        .points()
        .iter()
        .filter_map(|&(s, va)| b.value_at(s).map(|vb| (va, vb)))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InsufficientOverlap { shared: n });
    }
    pairs.sort_by(|p, q| cmp(p.0, q.0).then(cmp(p.1, q.1)));
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let ties_a = tied_pairs(pairs.windows(2).map(|w| w[0].0 == w[1].0));
    let ties_joint = tied_pairs(pairs.windows(2).map(|w| w[0] == w[1]));
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(n));
    let ties_b = tied_pairs(ys.windows(2).map(|w| w[0] == w[1]));
    if ties_a == n0 || ties_b == n0 {
        return Ok(None);
    }
    // Pairs tied in one series only are neither concordant nor discordant.
    let s = n0 as i128 - ties_a as i128 - ties_b as i128 + ties_joint as i128 - 2 * swaps as i128;
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok(Some(s as f64 / denom))
}

/// Symmetric matrix of τ-b values; `None` where τ is undefined or the two
/// series share fewer than two steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub task_ids: Vec<String>,
    pub tau: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(series: &[ScoreSeries]) -> Result<CorrelationMatrix> {
    let n = series.len();
    let mut tau = alloc::vec![alloc::vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let t = match kendall_tau(&series[i], &series[j]) {
                Ok(t) => t,
                Err(Error::InsufficientOverlap { .. }) => None,
                Err(e) => return Err(e),
            };
            tau[i][j] = t;
            tau[j][i] = t;
        }
    }
    Ok(CorrelationMatrix {
        task_ids: series.iter().map(|s| String::from(s.task_id())).collect(),
        tau,
    })
}

/// Unweighted mean of member series at the steps all members share.
pub fn package_mean(name: &str, members: &[&ScoreSeries]) -> Result<ScoreSeries> {
    let first = members
        .first()
        .ok_or_else(|| Error::NoData(alloc::format!("package `{name}` has no member series")))?;
    let points: Vec<(Step, f64)> = first
        .steps()
        .filter_map(|s| {
            let vals: Option<Vec<f64>> = members.iter().map(|m| m.value_at(s)).collect();
            vals.map(|v| (s, v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect();
    if points.is_empty() {
        return Err(Error::NoData(alloc::format!("package `{name}` members share no steps")));
    }
    ScoreSeries::new(name, first.run_tag(), points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub x_list: Vec<f64>,
    pub epsilon: f64,
    pub ema_coefficient: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            x_list: DEFAULT_X_LIST.to_vec(),
            epsilon: DEFAULT_EPSILON,
            ema_coefficient: DEFAULT_EMA_COEFFICIENT,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x_list.is_empty() {
            return Err(Error::config("x_list", "must not be empty"));
        }
        if let Some(x) = self.x_list.iter().find(|x| !(**x > 0.0 && **x <= 100.0)) {
            return Err(Error::config("x_list", alloc::format!("{x} is outside (0, 100]")));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must lie in [0, 0.5)"));
        }
        if !(self.ema_coefficient > 0.0 && self.ema_coefficient <= 1.0) {
            return Err(Error::config("ema_coefficient", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Horizontal reference line for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineLine {
    pub label: String,
    pub task_id: String,
    pub value: f64,
    /// The value is an approximation rather than an exact expectation.
    #[serde(default)]
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub task_id: String,
    pub raw: Vec<(Step, f64)>,
    pub smoothed: Vec<(Step, f64)>,
}

/// Threshold rows keep a place even when the threshold is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningProgressRow {
    pub task_id: String,
    pub x: f64,
    pub step_at_x: Option<Step>,
    pub max_value: f64,
    pub max_step: Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub task_id: String,
    pub epsilon: f64,
    pub start_step: Option<Step>,
    pub end_step: Option<Step>,
    pub interval: Option<Step>,
}

/// Every section is keyed by run tag; series from different runs are never merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub schema_version: u32,
    pub analysis: AnalysisConfig,
    pub curves: BTreeMap<String, Vec<Curve>>,
    pub learning_progress: BTreeMap<String, Vec<LearningProgressRow>>,
    pub phases: BTreeMap<String, Vec<PhaseRow>>,
    pub package_means: BTreeMap<String, Vec<Curve>>,
    pub baselines: BTreeMap<String, Vec<BaselineLine>>,
    pub correlation: BTreeMap<String, CorrelationMatrix>,
    pub warnings: Vec<String>,
}

fn curve(series: &ScoreSeries, c: f64) -> Result<Curve> {
    Ok(Curve {
        task_id: series.task_id().into(),
        raw: series.points().to_vec(),
        smoothed: ema(series, c)?.points().to_vec(),
    })
}

fn allow_undefined<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedThreshold { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Build the full report. `packages` maps a package name to its member task ids.
pub fn assemble_report(
    series: &[ScoreSeries],
    baselines: &[BaselineLine],
    packages: &BTreeMap<String, Vec<String>>,
    config: &AnalysisConfig,
) -> Result<DynamicsReport> {
    config.validate()?;
    let mut report = DynamicsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        analysis: config.clone(),
        curves: BTreeMap::new(),
        learning_progress: BTreeMap::new(),
        phases: BTreeMap::new(),
        package_means: BTreeMap::new(),
        baselines: BTreeMap::new(),
        correlation: BTreeMap::new(),
        warnings: Vec::new(),
    };
    let mut by_run: BTreeMap<&str, Vec<&ScoreSeries>> = BTreeMap::new();
    for s in series {
        if s.is_smoothed() {
            return Err(Error::SmoothedInput);
        }
        by_run.entry(s.run_tag()).or_default().push(s);
    }
    for (run, mut members) in by_run {
        members.sort_by(|a, b| a.task_id().cmp(b.task_id()));
        if let Some(w) = members.windows(2).find(|w| w[0].task_id() == w[1].task_id()) {
            return Err(Error::ContractViolation(alloc::format!(
                "run `{run}` has two series for task `{}`",
                w[0].task_id()
            )));
        }
        let mut curves = Vec::new();
        let mut lp_rows = Vec::new();
        let mut phase_rows = Vec::new();
        for s in &members {
            curves.push(curve(s, config.ema_coefficient)?);
            let (max_step, max_value) = s
                .points()
                .iter()
                .fold(s.points()[0], |best, &p| if p.1 > best.1 { p } else { best });
            for &x in &config.x_list {
                let lp = allow_undefined(learning_progress(s, x))?;
                lp_rows.push(LearningProgressRow {
                    task_id: s.task_id().into(),
                    x,
                    step_at_x: lp.map(|l| l.step_at_x),
                    max_value,
                    max_step,
                });
            }
            let ph = allow_undefined(epsilon_phase(s, config.epsilon))?;
            phase_rows.push(PhaseRow {
                task_id: s.task_id().into(),
                epsilon: config.epsilon,
                start_step: ph.as_ref().map(|p| p.start_step),
                end_step: ph.as_ref().map(|p| p.end_step),
                interval: ph.as_ref().map(|p| p.interval),
            });
            if ph.is_none() {
                report.warnings.push(alloc::format!(
                    "run `{run}`, task `{}`: maximum is not positive, thresholds undefined",
                    s.task_id()
                ));
            }
        }

        let mut means = Vec::new();
        for (name, tasks) in packages {
            let wanted: BTreeSet<&str> = tasks.iter().map(String::as_str).collect();
            let found: Vec<&ScoreSeries> = members
                .iter()
                .copied()
                .filter(|s| wanted.contains(s.task_id()))
                .collect();
            match package_mean(name, &found) {
                Ok(m) => means.push(curve(&m, config.ema_coefficient)?),
                Err(Error::NoData(msg)) => report.warnings.push(alloc::format!("run `{run}`: {msg}; omitted")),
                Err(e) => return Err(e),
            }
        }

        let present: BTreeSet<&str> = members.iter().map(|s| s.task_id()).collect();
        let lines: Vec<BaselineLine> = baselines
            .iter()
            .filter(|b| present.contains(b.task_id.as_str()))
            .cloned()
            .collect();
        let owned: Vec<ScoreSeries> = members.iter().map(|s| (*s).clone()).collect();
        report.correlation.insert(run.into(), correlation_matrix(&owned)?);
        report.curves.insert(run.into(), curves);
        report.learning_progress.insert(run.into(), lp_rows);
        report.phases.insert(run.into(), phase_rows);
        report.package_means.insert(run.into(), means);
        report.baselines.insert(run.into(), lines);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(values: &[f64]) -> ScoreSeries {
        ScoreSeries::new(
            "t",
            "r",
            values.iter().enumerate().map(|(i, &v)| (i as Step * 10, v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn always_never_case() {
        let s = series(&[0.9, 0.5, 0.6]);
        for x in DEFAULT_X_LIST {
            assert_eq!(learning_progress(&s, x).unwrap().step_at_x, 0);
        }
        assert!(learning_progress(&s, 0.0).is_err());
        assert!(matches!(
            learning_progress(&series(&[0.0, 0.0]), 90.0),
            Err(Error::UndefinedThreshold { .. })
        ));
    }

    #[test]
    fn phase_of_step_function() {
        let s = series(&[0.0, 0.0, 1.0, 1.0]);
        let p = epsilon_phase(&s, 0.05).unwrap();
        assert_eq!((p.start_step, p.end_step, p.interval), (20, 20, 0));
        let p0 = epsilon_phase(&s, 0.0).unwrap();
        assert_eq!((p0.start_step, p0.end_step), (0, 20));
        assert!(epsilon_phase(&s, 0.5).is_err());
    }

    #[test]
    fn ema_values_and_flag() {
        let s = series(&[0.0, 1.0]);
        let e = ema(&s, 0.5).unwrap();
        assert_eq!(e.values().collect::<Vec<_>>(), vec![0.0, 0.5]);
        assert!(e.is_smoothed());
        assert_eq!(learning_progress(&e, 90.0), Err(Error::SmoothedInput));
        assert_eq!(epsilon_phase(&e, 0.05), Err(Error::SmoothedInput));
        assert_eq!(ema(&s, 1.0).unwrap().points(), s.points());
        assert!(ema(&s, 0.0).is_err());
    }

    #[test]
    fn tau_edge_cases() {
        let a = series(&[0.1, 0.4, 0.2, 0.9]);
        let rev = a.map_values(|v| -v).unwrap();
        assert_eq!(kendall_tau(&a, &a).unwrap(), Some(1.0));
        assert_eq!(kendall_tau(&a, &rev).unwrap(), Some(-1.0));
        assert_eq!(kendall_tau(&a, &series(&[0.3; 4])).unwrap(), None);
        let other = ScoreSeries::new("u", "r", vec![(0, 0.1), (5, 0.2)]).unwrap();
        assert_eq!(kendall_tau(&a, &other), Err(Error::InsufficientOverlap { shared: 1 }));
    }

    #[test]
    fn report_keys_runs_separately_and_warns_on_empty_packages() {
        let a = series(&[0.1, 0.5, 0.9]);
        let b = ScoreSeries::new("t", "other", vec![(0, 0.2), (10, 0.3)]).unwrap();
        let packages: BTreeMap<String, Vec<String>> =
            [("pkg".into(), vec!["t".into()]), ("empty".into(), vec!["nope".into()])]
                .into_iter()
                .collect();
        let r = assemble_report(&[a, b], &[], &packages, &AnalysisConfig::default()).unwrap();
        assert_eq!(r.curves.keys().collect::<Vec<_>>(), vec!["other", "r"]);
        assert_eq!(r.curves["r"].len(), 1);
        assert_eq!(r.learning_progress["r"].len(), 3);
        assert_eq!(r.package_means["r"].len(), 1);
        assert_eq!(r.warnings.len(), 2);
    }
}

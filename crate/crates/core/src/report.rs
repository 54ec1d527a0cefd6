//! Scoring of run traces and the report bundle: strategy comparison with
//! relative change and upper bound, the decoding sensitivity sweep, the Taboo
//! difficulty curve and hyperparameter distributions.
//!
//! Everything here is a pure fold over keyed records, so rendered bytes do not
//! depend on generation order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::Backend;
use crate::error::{Error, Result};
use crate::metrics::{self, BleuOptions};
use crate::runner::{run_strategy, HagTrace, ResponseSettings, RunPlan, Strategy};
use crate::search::SearchPlan;
use crate::space::{Axis, ConfigSpace, HyperparamConfig, ParseStatus};
use crate::tasks::{Scorer, TaskInstance, TaskKind};

/// Signed percentage change, or undefined when the baseline is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeChange {
    Defined(f64),
    Undefined,
}

impl RelativeChange {
    pub fn value(self) -> Option<f64> {
        match self {
            RelativeChange::Defined(v) => Some(v),
            RelativeChange::Undefined => None,
        }
    }
}

impl fmt::Display for RelativeChange {
    /// One decimal with an explicit sign, e.g. `+5.8%`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelativeChange::Defined(v) => {
                let rounded = (v * 10.0).round() / 10.0;
                // avoid "-0.0%"
                let rounded = if rounded == 0.0 { 0.0 } else { rounded };
                write!(f, "{rounded:+.1}%")
            }
            RelativeChange::Undefined => f.write_str("n/a"),
        }
    }
}

/// `(new - base) / |base| * 100`.
///
/// Dividing by the magnitude keeps the sign equal to the sign of the change,
/// so on negative-range tasks a move toward 0 (an improvement) is positive.
pub fn relative_change(new: f64, base: f64) -> RelativeChange {
    if base == 0.0 || !base.is_finite() || !new.is_finite() {
        RelativeChange::Undefined
    } else {
        RelativeChange::Defined((new - base) / base.abs() * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub instance_id: String,
    pub replicate: u32,
    pub config: HyperparamConfig,
    pub sample_scores: Vec<f64>,
    /// `None` when the trace is incomplete.
    pub mean: Option<f64>,
}

/// Scores of one strategy on one task with one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub task: TaskKind,
    pub strategy: Strategy,
    pub model: String,
    /// Mean over replicates of the mean over complete instances (raw units).
    pub score: Option<f64>,
    pub replicates: u32,
    pub samples_per_instance: usize,
    pub instances: usize,
    pub incomplete: usize,
    pub parse_failures: usize,
    pub parse_failure_rate: f64,
    pub per_instance: Vec<InstanceScore>,
}

impl StrategyResult {
    /// Mean score per instance id, averaged over replicates.
    pub fn instance_means(&self) -> BTreeMap<String, f64> {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for s in &self.per_instance {
            if let Some(m) = s.mean {
                let e = sums.entry(s.instance_id.clone()).or_insert((0.0, 0));
                e.0 += m;
                e.1 += 1;
            }
        }
        sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

/// Scores traces offline. Traces are grouped by (task, strategy, model); a
/// trace with an error or the wrong number of outputs counts as incomplete
/// and is left out of the mean.
pub fn score_traces(
    traces: &[HagTrace],
    instances: &[TaskInstance],
    scorer: &Scorer,
    samples: usize,
) -> Result<Vec<StrategyResult>> {
    let by_id: HashMap<(TaskKind, &str), &TaskInstance> =
        instances.iter().map(|i| ((i.task, i.id.as_str()), i)).collect();
    let mut groups: BTreeMap<(TaskKind, Strategy, String), Vec<&HagTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry((t.task, t.strategy, t.model.clone())).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((task, strategy, model), mut group)| {
            group.sort_by(|a, b| a.replicate.cmp(&b.replicate).then(a.instance_id.cmp(&b.instance_id)));
            let mut per_instance = Vec::with_capacity(group.len());
            for trace in &group {
                let instance = by_id.get(&(task, trace.instance_id.as_str())).ok_or_else(|| {
                    Error::Data(format!(
                        "trace refers to unknown {task} instance `{}`",
                        trace.instance_id
                    ))
                })?;
                let sample_scores = trace
                    .stage2_outputs
                    .iter()
                    .map(|r| scorer.score(instance, r).map(|s| s.value))
                    .collect::<Result<Vec<_>>>()?;
                let mean = if trace.is_complete(samples) {
                    metrics::mean(&sample_scores)
                } else {
                    None
                };
                per_instance.push(InstanceScore {
                    instance_id: trace.instance_id.clone(),
                    replicate: trace.replicate,
                    config: trace.parsed_config,
                    sample_scores,
                    mean,
                });
            }
            let replicates: BTreeSet<u32> = group.iter().map(|t| t.replicate).collect();
            let replicate_means: Vec<f64> = replicates
                .iter()
                .filter_map(|r| {
                    let means: Vec<f64> = per_instance
                        .iter()
                        .filter(|s| s.replicate == *r)
                        .filter_map(|s| s.mean)
                        .collect();
                    metrics::mean(&means)
                })
                .collect();
            let parse_failures = if strategy.is_hag() {
                group.iter().filter(|t| t.parse_status == ParseStatus::Fallback).count()
            } else {
                0
            };
            Ok(StrategyResult {
                task,
                strategy,
                model,
                score: metrics::mean(&replicate_means),
                replicates: replicates.len() as u32,
                samples_per_instance: samples,
                instances: group.len(),
                incomplete: per_instance.iter().filter(|s| s.mean.is_none()).count(),
                parse_failures,
                parse_failure_rate: parse_failures as f64 / group.len() as f64,
                per_instance,
            })
        })
        .collect()
}

/// Runs a strategy and scores it. Backend failures become incomplete
/// instances rather than errors.
pub fn evaluate(
    instances: &[TaskInstance],
    plan: &RunPlan<'_>,
    scorer: &Scorer,
) -> Result<(Vec<HagTrace>, StrategyResult)> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one instance".into()));
    }
    let task = instances[0].task;
    if instances.iter().any(|i| i.task != task) {
        return Err(Error::InvalidInput(
            "evaluation instances must all belong to one task".into(),
        ));
    }
    let traces = run_strategy(instances, plan);
    let mut results = score_traces(&traces, instances, scorer, plan.response.samples)?;
    let result = results
        .pop()
        .ok_or_else(|| Error::InvalidInput("no traces produced".into()))?;
    Ok((traces, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundEntry {
    pub task: TaskKind,
    pub model: String,
    pub score: f64,
}

/// Reproducibility record embedded in every report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<ConfigSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SearchPlan>,
    pub bleu: BleuOptions,
    pub template_hashes: BTreeMap<String, String>,
    pub backends: BTreeSet<String>,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeChangeEntry {
    pub task: TaskKind,
    pub model: String,
    pub strategy: Strategy,
    pub change: RelativeChange,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub manifest: Manifest,
    pub results: Vec<StrategyResult>,
    pub upper_bounds: Vec<UpperBoundEntry>,
}

impl EvalReport {
    pub fn new(manifest: Manifest, mut results: Vec<StrategyResult>, mut upper_bounds: Vec<UpperBoundEntry>) -> Self {
        results.sort_by(|a, b| {
            a.model
                .cmp(&b.model)
                .then(a.task.cmp(&b.task))
                .then(a.strategy.cmp(&b.strategy))
        });
        upper_bounds.sort_by(|a, b| a.model.cmp(&b.model).then(a.task.cmp(&b.task)));
        Self {
            manifest,
            results,
            upper_bounds,
        }
    }

    pub fn result(&self, model: &str, task: TaskKind, strategy: Strategy) -> Option<&StrategyResult> {
        self.results
            .iter()
            .find(|r| r.model == model && r.task == task && r.strategy == strategy)
    }

    pub fn models(&self) -> BTreeSet<&str> {
        self.results
            .iter()
            .map(|r| r.model.as_str())
            .chain(self.upper_bounds.iter().map(|u| u.model.as_str()))
            .collect()
    }

    /// RC of every HAG strategy against Default, per (task, model).
    pub fn relative_changes(&self) -> Vec<RelativeChangeEntry> {
        self.results
            .iter()
            .filter(|r| r.strategy.is_hag())
            .filter_map(|hag| {
                let default = self.result(&hag.model, hag.task, Strategy::Default)?;
                let change = match (hag.score, default.score) {
                    (Some(h), Some(d)) => relative_change(h, d),
                    _ => RelativeChange::Undefined,
                };
                Some(RelativeChangeEntry {
                    task: hag.task,
                    model: hag.model.clone(),
                    strategy: hag.strategy,
                    change,
                })
            })
            .collect()
    }

    fn upper_bound(&self, model: &str, task: TaskKind) -> Option<f64> {
        self.upper_bounds
            .iter()
            .find(|u| u.model == model && u.task == task)
            .map(|u| u.score)
    }
}

fn display(task: TaskKind, raw: f64) -> String {
    format!("{:.2}", raw * task.display_scale())
}

/// Markdown tables: one per model, strategies as rows and tasks as columns,
/// followed by RC and UB rows.
pub fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::from("# Evaluation report\n\n");
    out.push_str("Scores are percentages except Taboo (raw penalty, closer to 0 is better).\n");
    let models = report.models();
    if models.is_empty() {
        out.push('\n');
        table_header(&mut out, &TaskKind::ALL);
        return out;
    }
    for model in models {
        let tasks: Vec<TaskKind> = TaskKind::ALL
            .into_iter()
            .filter(|t| {
                report.results.iter().any(|r| r.model == model && r.task == *t)
                    || report.upper_bound(model, *t).is_some()
            })
            .collect();
        let _ = write!(out, "\n## {model}\n\n");
        table_header(&mut out, &tasks);
        for strategy in Strategy::ALL {
            if !report
                .results
                .iter()
                .any(|r| r.model == model && r.strategy == strategy)
            {
                continue;
            }
            let cells: Vec<String> = tasks
                .iter()
                .map(|t| match report.result(model, *t, strategy) {
                    Some(StrategyResult {
                        score: Some(s),
                        incomplete,
                        ..
                    }) => {
                        let mark = if *incomplete > 0 { "*" } else { "" };
                        format!("{}{mark}", display(*t, *s))
                    }
                    Some(_) => "incomplete".into(),
                    None => "-".into(),
                })
                .collect();
            table_row(&mut out, strategy.title(), &cells);
        }
        let changes = report.relative_changes();
        for strategy in [Strategy::HagSft, Strategy::HagIcl] {
            if !changes.iter().any(|c| c.model == model && c.strategy == strategy) {
                continue;
            }
            let cells: Vec<String> = tasks
                .iter()
                .map(|t| {
                    changes
                        .iter()
                        .find(|c| c.model == model && c.task == *t && c.strategy == strategy)
                        .map_or_else(|| "-".into(), |c| c.change.to_string())
                })
                .collect();
            let label = if strategy == Strategy::HagIcl { "RC (ICL)" } else { "RC" };
            table_row(&mut out, label, &cells);
        }
        if tasks.iter().any(|t| report.upper_bound(model, *t).is_some()) {
            let cells: Vec<String> = tasks
                .iter()
                .map(|t| {
                    report
                        .upper_bound(model, *t)
                        .map_or_else(|| "-".into(), |u| display(*t, u))
                })
                .collect();
            table_row(&mut out, "UB", &cells);
        }
        let hag: Vec<&StrategyResult> = report
            .results
            .iter()
            .filter(|r| r.model == model && r.strategy.is_hag())
            .collect();
        if !hag.is_empty() {
            out.push_str("\nParse-failure rate (stage-1 output fell back to the default config):\n\n");
            for r in hag {
                let _ = writeln!(
                    out,
                    "- {} / {}: {:.1}% ({} of {})",
                    r.strategy.title(),
                    r.task.title(),
                    r.parse_failure_rate * 100.0,
                    r.parse_failures,
                    r.instances
                );
            }
        }
        if report.results.iter().any(|r| r.model == model && r.incomplete > 0) {
            out.push_str("\n`*` marks scores with incomplete instances left out of the mean.\n");
        }
    }
    out
}

fn table_header(out: &mut String, tasks: &[TaskKind]) {
    out.push_str("| Method |");
    for t in tasks {
        let _ = write!(out, " {} |", t.title());
    }
    out.push_str("\n|---|");
    for _ in tasks {
        out.push_str("---:|");
    }
    out.push('\n');
}

fn table_row(out: &mut String, label: &str, cells: &[String]) {
    let _ = write!(out, "| {label} |");
    for c in cells {
        let _ = write!(out, " {c} |");
    }
    out.push('\n');
}

fn csv_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Long-format CSV: one line per strategy score, RC and UB value.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out =
        String::from("model,task,row,raw,display,instances,incomplete,samples_per_instance,parse_failure_rate\n");
    for r in &report.results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.task,
            r.strategy,
            csv_num(r.score),
            csv_num(r.score.map(|s| s * r.task.display_scale())),
            r.instances,
            r.incomplete,
            r.samples_per_instance,
            r.parse_failure_rate
        );
    }
    for c in report.relative_changes() {
        let _ = writeln!(
            out,
            "{},{},rc_{},{},{},,,,",
            c.model,
            c.task,
            c.strategy,
            csv_num(c.change.value()),
            c.change
        );
    }
    for u in &report.upper_bounds {
        let _ = writeln!(
            out,
            "{},{},ub,{},{},,,,",
            u.model,
            u.task,
            u.score,
            u.score * u.task.display_scale()
        );
    }
    out
}

pub fn render_json(report: &EvalReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serialises");
    text.push('\n');
    text
}

/// Writes report.md, report.csv and report.json into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("report.md", render_markdown(report)),
        ("report.csv", render_csv(report)),
        ("report.json", render_json(report)),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub axis: Axis,
    pub value: f64,
    pub mean_self_bleu: f64,
    /// Population variance across probe instances.
    pub variance: f64,
    pub instances: usize,
}

/// The protocol's number of values per axis.
pub const SENSITIVITY_POINTS: usize = 5;

/// `n` evenly spaced values spanning the default grid's range for `axis`
/// (top_k values are rounded).
pub fn sweep_values(axis: Axis, n: usize) -> Vec<f64> {
    let space = ConfigSpace::default();
    let (lo, hi) = match axis {
        Axis::Temperature => (space.temperature[0], *space.temperature.last().unwrap()),
        Axis::TopP => (space.top_p[0], *space.top_p.last().unwrap()),
        Axis::TopK => (space.top_k[0] as f64, *space.top_k.last().unwrap() as f64),
        Axis::RepetitionPenalty => (space.repetition_penalty[0], *space.repetition_penalty.last().unwrap()),
    };
    (0..n)
        .map(|i| {
            let v = if n == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            };
            // strip accumulated float noise so values print cleanly
            let v = (v * 1e9).round() / 1e9;
            if axis == Axis::TopK {
                v.round()
            } else {
                v
            }
        })
        .collect()
}

/// Self-BLEU of `settings.samples` outputs per probe instance for each axis
/// value, other axes held at `base`.
pub fn sensitivity_sweep(
    backend: &dyn Backend,
    probe: &[TaskInstance],
    axis: Axis,
    values: &[f64],
    base: HyperparamConfig,
    settings: &ResponseSettings,
    bleu: &BleuOptions,
) -> Result<Vec<SensitivityRow>> {
    if probe.is_empty() || values.is_empty() {
        return Err(Error::InvalidInput(
            "sensitivity sweep needs probe instances and axis values".into(),
        ));
    }
    if settings.samples < 2 {
        return Err(Error::InvalidInput("Self-BLEU needs at least 2 samples".into()));
    }
    if values.len() != SENSITIVITY_POINTS {
        log::warn!(
            "sensitivity sweep over {} values; the protocol uses {SENSITIVITY_POINTS}",
            values.len()
        );
    }
    values
        .iter()
        .map(|&value| {
            let config = axis.set(&base, value)?;
            let per_instance = probe
                .iter()
                .map(|instance| {
                    let outputs = settings.generate(backend, &instance.input, config)?;
                    metrics::self_bleu(&outputs, bleu)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, variance) = metrics::mean_and_variance(&per_instance)?;
            Ok(SensitivityRow {
                axis,
                value,
                mean_self_bleu: mean,
                variance,
                instances: probe.len(),
            })
        })
        .collect()
}

pub fn render_sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("axis,value,mean_self_bleu,variance,instances\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.axis.name(),
            r.value,
            r.mean_self_bleu,
            r.variance,
            r.instances
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub constraints: usize,
    pub strategy: Strategy,
    pub model: String,
    /// `None` marks a gap: no scored instance with this many constraints.
    pub mean: Option<f64>,
    pub instances: usize,
}

pub const DIFFICULTY_COUNTS: std::ops::RangeInclusive<usize> = 3..=10;

/// Mean Taboo score per (constraint count, strategy) from scored results.
pub fn difficulty_sweep(results: &[StrategyResult], instances: &[TaskInstance]) -> Vec<DifficultyRow> {
    let counts: HashMap<&str, usize> = instances
        .iter()
        .filter(|i| i.task == TaskKind::Taboo)
        .filter_map(|i| Some((i.id.as_str(), i.constraint_count()?)))
        .collect();
    let mut rows = Vec::new();
    for result in results.iter().filter(|r| r.task == TaskKind::Taboo) {
        let means = result.instance_means();
        let mut gaps = Vec::new();
        for n in DIFFICULTY_COUNTS {
            let group: Vec<f64> = means
                .iter()
                .filter(|(id, _)| counts.get(id.as_str()) == Some(&n))
                .map(|(_, m)| *m)
                .collect();
            if group.is_empty() {
                gaps.push(n.to_string());
            }
            rows.push(DifficultyRow {
                constraints: n,
                strategy: result.strategy,
                model: result.model.clone(),
                mean: metrics::mean(&group),
                instances: group.len(),
            });
        }
        if !gaps.is_empty() {
            log::warn!(
                "{} Taboo results have no instance with {} constraints",
                result.strategy,
                gaps.join(", ")
            );
        }
    }
    rows.sort_by(|a, b| {
        a.model
            .cmp(&b.model)
            .then(a.strategy.cmp(&b.strategy))
            .then(a.constraints.cmp(&b.constraints))
    });
    rows
}

pub fn render_difficulty_csv(rows: &[DifficultyRow]) -> String {
    let mut out = String::from("model,strategy,constraints,mean,instances\n");
    for r in rows {
        let mean = r.mean.map_or_else(|| "gap".to_owned(), |m| format!("{m}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.model, r.strategy, r.constraints, mean, r.instances
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub value: f64,
    pub count: usize,
    /// (value - min) / (max - min); 0 when all values coincide.
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisDistribution {
    pub axis: Axis,
    pub min: f64,
    pub max: f64,
    pub bins: Vec<Bin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDistribution {
    pub task: TaskKind,
    pub model: String,
    pub traces: usize,
    pub axes: Vec<AxisDistribution>,
}

/// Per (task, model) and axis: one bin per distinct parsed value.
pub fn export_distributions(traces: &[HagTrace]) -> Vec<ConfigDistribution> {
    let mut groups: BTreeMap<(TaskKind, &str), Vec<&HagTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry((t.task, t.model.as_str())).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((task, model), group)| {
            let axes = Axis::ALL
                .into_iter()
                .map(|axis| {
                    let mut tally: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
                    for t in &group {
                        let v = axis.value(&t.parsed_config);
                        // all values are positive, so bit order is numeric order
                        tally.entry(v.to_bits()).or_insert((v, 0)).1 += 1;
                    }
                    let min = tally.values().next().map_or(0.0, |b| b.0);
                    let max = tally.values().last().map_or(0.0, |b| b.0);
                    let bins = tally
                        .into_values()
                        .map(|(value, count)| Bin {
                            value,
                            count,
                            position: if max > min { (value - min) / (max - min) } else { 0.0 },
                        })
                        .collect();
                    AxisDistribution { axis, min, max, bins }
                })
                .collect();
            ConfigDistribution {
                task,
                model: model.to_owned(),
                traces: group.len(),
                axes,
            }
        })
        .collect()
}

pub fn render_distributions_json(distributions: &[ConfigDistribution]) -> String {
    let mut text = serde_json::to_string_pretty(distributions).expect("distributions serialise");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{FnBackend, ScriptedBackend};
    use crate::runner::{ModelFamily, PromptTemplate};
    use crate::space::TOY_DEFAULT;
    use crate::tasks::Reference;

    fn cfg(t: f64, p: f64, k: u32, r: f64) -> HyperparamConfig {
        HyperparamConfig::new(t, p, k, r).unwrap()
    }

    fn trace(task: TaskKind, id: &str, strategy: Strategy, config: HyperparamConfig, outputs: &[&str]) -> HagTrace {
        HagTrace {
            instance_id: id.into(),
            task,
            model: "m".into(),
            strategy,
            replicate: 0,
            stage1_prompt: None,
            stage1_raw_output: None,
            parsed_config: config,
            parse_status: ParseStatus::Ok,
            stage2_prompt: "q".into(),
            stage2_outputs: outputs.iter().map(|s| s.to_string()).collect(),
            error: None,
        }
    }

    fn arith(id: &str, answer: f64) -> TaskInstance {
        TaskInstance::new(TaskKind::Multiarith, id, "q", Reference::Number(answer)).unwrap()
    }

    fn taboo(id: &str, words: &[&str]) -> TaskInstance {
        TaskInstance::new(
            TaskKind::Taboo,
            id,
            "describe",
            Reference::Constraints(words.iter().map(|s| s.to_string()).collect()),
        )
        .unwrap()
    }

    #[test]
    fn relative_change_examples() {
        assert_eq!(relative_change(53.00, 50.10).to_string(), "+5.8%");
        assert_eq!(relative_change(59.56, 49.66).to_string(), "+19.9%");
        assert_eq!(relative_change(7.0, 7.0), RelativeChange::Defined(0.0));
        assert_eq!(relative_change(1.0, 0.0), RelativeChange::Undefined);
        // negative-range tasks: moving toward 0 is an improvement
        assert_eq!(relative_change(-18.42, -19.21).to_string(), "+4.1%");
        assert_eq!(relative_change(40.0, 50.0).to_string(), "-20.0%");
    }

    #[test]
    fn hand_averaged_three_instances() {
        let instances = [arith("a", 1.0), arith("b", 2.0), arith("c", 3.0)];
        // a: 2/2 right, b: 1/2, c: 0/2 -> (1 + 0.5 + 0) / 3
        let traces = [
            trace(TaskKind::Multiarith, "a", Strategy::Default, TOY_DEFAULT, &["1", "1"]),
            trace(TaskKind::Multiarith, "b", Strategy::Default, TOY_DEFAULT, &["2", "5"]),
            trace(TaskKind::Multiarith, "c", Strategy::Default, TOY_DEFAULT, &["0", "0"]),
        ];
        let r = &score_traces(&traces, &instances, &Scorer::new(), 2).unwrap()[0];
        assert!((r.score.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.incomplete, 0);
        assert_eq!(r.instance_means()["b"], 0.5);
    }

    #[test]
    fn incomplete_instances_are_marked_not_fatal() {
        let instances = [arith("a", 1.0), arith("b", 2.0)];
        let mut broken = trace(TaskKind::Multiarith, "b", Strategy::Default, TOY_DEFAULT, &["2"]);
        broken.error = Some("transport".into());
        let traces = [
            trace(TaskKind::Multiarith, "a", Strategy::Default, TOY_DEFAULT, &["1", "1"]),
            broken,
        ];
        let r = &score_traces(&traces, &instances, &Scorer::new(), 2).unwrap()[0];
        assert_eq!(r.incomplete, 1);
        assert_eq!(r.score, Some(1.0));
        let report = EvalReport::new(Manifest::default(), vec![r.clone()], vec![]);
        assert!(render_markdown(&report).contains("| Default | 100.00* |"));
    }

    #[test]
    fn unknown_instance_is_an_error() {
        let traces = [trace(
            TaskKind::Multiarith,
            "zz",
            Strategy::Default,
            TOY_DEFAULT,
            &["1"],
        )];
        assert!(score_traces(&traces, &[arith("a", 1.0)], &Scorer::new(), 1).is_err());
    }

    #[test]
    fn random_replicates_are_averaged() {
        let instances = [arith("a", 1.0)];
        let mut traces = Vec::new();
        for (rep, out) in ["1", "0", "1", "1", "0"].iter().enumerate() {
            let mut t = trace(TaskKind::Multiarith, "a", Strategy::Random, TOY_DEFAULT, &[out]);
            t.replicate = rep as u32;
            traces.push(t);
        }
        let r = &score_traces(&traces, &instances, &Scorer::new(), 1).unwrap()[0];
        assert_eq!(r.replicates, 5);
        assert!((r.score.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn evaluate_with_constant_and_deterministic_backends() {
        let instances = [arith("a", 4.0), arith("b", 4.0)];
        let backend = FnBackend::new(|_| "4".into());
        let plan = RunPlan {
            strategy: Strategy::Default,
            backend: &backend,
            stage1_backend: None,
            selection: crate::runner::ConfigSelection::new(PromptTemplate::builtin(ModelFamily::Plain, 1), 0),
            response: ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 10, 8, 0),
            space: ConfigSpace::default(),
            demonstrations: vec![],
            icl_k: 1,
            parallelism: 2,
        };
        let (traces, result) = evaluate(&instances, &plan, &Scorer::new()).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(result.score, Some(1.0));
        for s in &result.per_instance {
            assert_eq!(metrics::mean_and_variance(&s.sample_scores).unwrap().1, 0.0);
            assert_eq!(s.sample_scores.len(), 10);
        }
    }

    fn sample_report() -> EvalReport {
        let result = |strategy, score: f64| StrategyResult {
            task: TaskKind::Coinflip,
            strategy,
            model: "m".into(),
            score: Some(score),
            replicates: 1,
            samples_per_instance: 10,
            instances: 4,
            incomplete: 0,
            parse_failures: if strategy == Strategy::HagSft { 1 } else { 0 },
            parse_failure_rate: if strategy == Strategy::HagSft { 0.25 } else { 0.0 },
            per_instance: vec![],
        };
        EvalReport::new(
            Manifest::default(),
            vec![result(Strategy::HagSft, 0.53), result(Strategy::Default, 0.501)],
            vec![UpperBoundEntry {
                task: TaskKind::Coinflip,
                model: "m".into(),
                score: 0.7,
            }],
        )
    }

    #[test]
    fn markdown_layout() {
        let md = render_markdown(&sample_report());
        let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| ")).collect();
        assert_eq!(
            rows,
            [
                "| Method | CoinFlip |",
                "| Default | 50.10 |",
                "| HAG | 53.00 |",
                "| RC | +5.8% |",
                "| UB | 70.00 |",
            ]
        );
        assert!(md.contains("25.0% (1 of 4)"));
        assert_eq!(md, render_markdown(&sample_report()));
        let csv = render_csv(&sample_report());
        assert!(csv.contains("m,coinflip,rc_hag_sft,"));
        assert!(csv.contains("m,coinflip,ub,0.7,70,,,,"));
    }

    #[test]
    fn empty_report_is_header_only() {
        let md = render_markdown(&EvalReport::default());
        let table: Vec<&str> = md.lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(table.len(), 2);
        assert!(table[0].contains("MultiArith"));
    }

    #[test]
    fn sensitivity_with_deterministic_backend() {
        let backend = FnBackend::new(|r| format!("same answer for {}", r.prompt));
        let probe: Vec<TaskInstance> = (0..5).map(|i| arith(&format!("p{i}"), 1.0)).collect();
        let settings = ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 4, 8, 0);
        let values = sweep_values(Axis::Temperature, 5);
        assert_eq!(values, vec![0.1, 0.55, 1.0, 1.45, 1.9]);
        let rows = sensitivity_sweep(
            &backend,
            &probe,
            Axis::Temperature,
            &values,
            TOY_DEFAULT,
            &settings,
            &BleuOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert_eq!(r.mean_self_bleu, 1.0);
            assert_eq!(r.variance, 0.0);
        }
        // 3 values is allowed (with a warning)
        assert_eq!(
            sensitivity_sweep(
                &backend,
                &probe,
                Axis::TopP,
                &[0.5, 0.7, 0.9],
                TOY_DEFAULT,
                &settings,
                &BleuOptions::default()
            )
            .unwrap()
            .len(),
            3
        );
        assert_eq!(render_sensitivity_csv(&rows).lines().count(), 6);
    }

    #[test]
    fn sweep_values_cover_every_axis() {
        assert_eq!(sweep_values(Axis::TopK, 5), vec![10.0, 33.0, 55.0, 78.0, 100.0]);
        assert_eq!(
            sweep_values(Axis::RepetitionPenalty, 5),
            vec![1.0, 1.125, 1.25, 1.375, 1.5]
        );
        for axis in Axis::ALL {
            for v in sweep_values(axis, 5) {
                axis.set(&TOY_DEFAULT, v).unwrap();
            }
        }
    }

    fn taboo_fixture() -> Vec<TaskInstance> {
        let pool = [
            "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
        ];
        (3..=10).map(|n| taboo(&format!("t{n}"), &pool[..n])).collect()
    }

    fn difficulty_for(respond: impl Fn(&TaskInstance) -> String) -> Vec<DifficultyRow> {
        let instances = taboo_fixture();
        let traces: Vec<HagTrace> = instances
            .iter()
            .map(|i| {
                let out = respond(i);
                trace(TaskKind::Taboo, &i.id, Strategy::Default, TOY_DEFAULT, &[&out])
            })
            .collect();
        let results = score_traces(&traces, &instances, &Scorer::new(), 1).unwrap();
        difficulty_sweep(&results, &instances)
    }

    #[test]
    fn difficulty_avoiding_everything_is_flat_zero() {
        let rows = difficulty_for(|_| "nothing forbidden here".into());
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.mean == Some(0.0)));
    }

    #[test]
    fn difficulty_uttering_everything_hits_the_floor() {
        let rows = difficulty_for(|i| match &i.reference {
            Reference::Constraints(words) => words.join(" "),
            _ => unreachable!(),
        });
        let means: Vec<f64> = rows.iter().map(|r| r.mean.unwrap()).collect();
        assert_eq!(means, vec![-3.0, -4.0, -5.0, -6.0, -7.0, -8.0, -9.0, -10.0]);
    }

    #[test]
    fn difficulty_mixed_fixture_and_gaps() {
        // always says "alpha beta": two hits wherever both are forbidden
        let mut rows = difficulty_for(|_| "alpha and beta".into());
        assert!(rows.iter().all(|r| r.mean == Some(-2.0)));
        let instances: Vec<TaskInstance> = taboo_fixture().into_iter().filter(|i| i.id != "t4").collect();
        let traces: Vec<HagTrace> = instances
            .iter()
            .map(|i| trace(TaskKind::Taboo, &i.id, Strategy::Default, TOY_DEFAULT, &["gamma"]))
            .collect();
        let results = score_traces(&traces, &instances, &Scorer::new(), 1).unwrap();
        rows = difficulty_sweep(&results, &instances);
        assert_eq!(rows[1].mean, None);
        assert_eq!(rows[0].mean, Some(-1.0));
        assert!(render_difficulty_csv(&rows).contains("m,default,4,gap,0"));
    }

    #[test]
    fn distributions_examples() {
        let same: Vec<HagTrace> = (0..3)
            .map(|i| trace(TaskKind::Coinflip, &i.to_string(), Strategy::HagSft, TOY_DEFAULT, &[]))
            .collect();
        let d = export_distributions(&same);
        assert_eq!(d.len(), 1);
        assert!(d[0].axes.iter().all(|a| a.bins.len() == 1 && a.bins[0].count == 3));

        let two: Vec<HagTrace> = (0..4)
            .map(|i| {
                let t = if i % 2 == 0 { 0.3 } else { 0.9 };
                trace(
                    TaskKind::Coinflip,
                    &i.to_string(),
                    Strategy::HagSft,
                    cfg(t, 0.9, 50, 1.0),
                    &[],
                )
            })
            .collect();
        let temp = &export_distributions(&two)[0].axes[0];
        assert_eq!(temp.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 2]);
        assert_eq!(temp.bins[1].position, 1.0);
    }

    #[test]
    fn scripted_backend_report_runs_end_to_end() {
        let backend = ScriptedBackend::new(["1", "1"]).unwrap();
        let instances = [arith("a", 1.0), arith("b", 2.0)];
        let plan = RunPlan {
            strategy: Strategy::Default,
            backend: &backend,
            stage1_backend: None,
            selection: crate::runner::ConfigSelection::new(PromptTemplate::builtin(ModelFamily::Plain, 1), 0),
            response: ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 1, 4, 0),
            space: ConfigSpace::default(),
            demonstrations: vec![],
            icl_k: 1,
            parallelism: 1,
        };
        let (_, result) = evaluate(&instances, &plan, &Scorer::new()).unwrap();
        assert_eq!(result.score, Some(0.5));
    }
}

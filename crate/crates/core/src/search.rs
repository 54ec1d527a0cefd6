//! Two-stage construction of per-input target configs.
//!
//! 1. **Prune**: score every config of the space on a small probe subset and
//!    drop those whose mean falls below the task threshold.
//! 2. **Greedy**: keep the `greedy_keep` survivors with the highest cumulative
//!    probe score, evaluate them on the training instances, and give every
//!    instance its best config. Ties go to the config that wins outright most
//!    often across instances, then to the lexicographically smallest config.
//!
//! Every (instance, config) evaluation is the mean task score of
//! `samples_per_config` sampled answers, memoised in an [`Evaluator`] and
//! optionally persisted to a checkpoint file so interrupted searches resume.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::Backend;
use crate::error::{Error, Result};
use crate::metrics;
use crate::report::{relative_change, RelativeChange};
use crate::runner::ResponseSettings;
use crate::space::{render_config_text, HyperparamConfig};
use crate::tasks::{Scorer, TaskInstance, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub config: HyperparamConfig,
    pub sample_scores: Vec<f64>,
    pub mean_score: f64,
}

impl ScoreRecord {
    pub fn new(instance_id: impl Into<String>, config: HyperparamConfig, sample_scores: Vec<f64>) -> Self {
        let mean_score = metrics::mean(&sample_scores).unwrap_or(0.0);
        Self {
            instance_id: instance_id.into(),
            config,
            sample_scores,
            mean_score,
        }
    }
}

fn default_subset() -> usize {
    5
}
fn default_keep() -> usize {
    10
}
fn default_train() -> usize {
    100
}
fn default_samples() -> usize {
    10
}

/// Search sizes and per-task pruning thresholds.
///
/// Thresholds are in reported units (percent for every task but Taboo), the
/// same units as the report tables. A missing or `null` threshold disables
/// pruning for that task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    #[serde(default = "default_subset")]
    pub prune_subset_size: usize,
    #[serde(default = "default_keep")]
    pub greedy_keep: usize,
    #[serde(default = "default_train")]
    pub train_size: usize,
    #[serde(default = "default_samples")]
    pub samples_per_config: usize,
    #[serde(default)]
    pub thresholds: BTreeMap<TaskKind, Option<f64>>,
}

impl Default for SearchPlan {
    /// Sizes 5 / 10 / 100 / 10 and the LLaMA2-7B-Chat thresholds.
    fn default() -> Self {
        Self {
            prune_subset_size: default_subset(),
            greedy_keep: default_keep(),
            train_size: default_train(),
            samples_per_config: default_samples(),
            thresholds: llama2_7b_chat_thresholds(),
        }
    }
}

/// Pruning thresholds tuned for LLaMA2-7B-Chat, in reported units.
pub fn llama2_7b_chat_thresholds() -> BTreeMap<TaskKind, Option<f64>> {
    BTreeMap::from([
        (TaskKind::Coinflip, Some(50.0)),
        (TaskKind::SpellingBee, Some(0.5)),
        (TaskKind::Ynbw, Some(0.0)),
        (TaskKind::Taboo, Some(-1.5)),
        (TaskKind::PigLatin, Some(0.1)),
        (TaskKind::Multiarith, Some(0.1)),
    ])
}

impl SearchPlan {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: SearchPlan =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("prune_subset_size", self.prune_subset_size),
            ("greedy_keep", self.greedy_keep),
            ("train_size", self.train_size),
            ("samples_per_config", self.samples_per_config),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("search plan field {name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Threshold in raw score units; `-inf` when the task has none.
    pub fn raw_threshold(&self, task: TaskKind) -> f64 {
        match self.thresholds.get(&task).copied().flatten() {
            Some(t) => t / task.display_scale(),
            None => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    checkpoint: u32,
    fingerprint: String,
}

/// Memoising evaluator of (instance, config) pairs.
pub struct Evaluator<'a> {
    backend: &'a dyn Backend,
    scorer: &'a Scorer,
    settings: ResponseSettings,
    parallelism: usize,
    cache: Mutex<HashMap<(String, HyperparamConfig), ScoreRecord>>,
    checkpoint: Option<PathBuf>,
    queries: Mutex<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(backend: &'a dyn Backend, scorer: &'a Scorer, settings: ResponseSettings) -> Self {
        Self {
            backend,
            scorer,
            settings,
            parallelism: 1,
            cache: Mutex::new(HashMap::new()),
            checkpoint: None,
            queries: Mutex::new(0),
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn settings(&self) -> &ResponseSettings {
        &self.settings
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend
    }

    /// Identifies the evaluation settings a checkpoint belongs to.
    pub fn fingerprint(&self) -> String {
        let settings = serde_json::to_string(&self.settings).expect("settings serialise");
        let mut hasher = Sha256::new();
        hasher.update(self.backend.id().as_bytes());
        hasher.update([0]);
        hasher.update(settings.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Attaches a checkpoint file, loading any records it already holds.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let fingerprint = self.fingerprint();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            if let Some(first) = lines.next() {
                let header: CheckpointHeader = serde_json::from_str(first)
                    .map_err(|e| Error::Data(format!("{}: bad checkpoint header: {e}", path.display())))?;
                if header.fingerprint != fingerprint {
                    return Err(Error::Config(format!(
                        "{} was written with different evaluation settings",
                        path.display()
                    )));
                }
                let mut cache = self.cache.lock().expect("cache poisoned");
                for line in lines {
                    // a torn final line from an interrupted write is skipped
                    let Ok(record) = serde_json::from_str::<ScoreRecord>(line) else {
                        log::warn!("{}: skipping unreadable checkpoint line", path.display());
                        continue;
                    };
                    if record.sample_scores.len() == self.settings.samples {
                        cache.insert((record.instance_id.clone(), record.config), record);
                    }
                }
            }
        } else {
            let header = CheckpointHeader {
                checkpoint: 1,
                fingerprint,
            };
            fs::write(&path, format!("{}\n", serde_json::to_string(&header)?)).map_err(|e| Error::io(&path, e))?;
        }
        self.checkpoint = Some(path);
        Ok(self)
    }

    /// Number of (instance, config) evaluations that actually hit the backend.
    pub fn backend_evaluations(&self) -> usize {
        *self.queries.lock().expect("counter poisoned")
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    fn evaluate_one(&self, instance: &TaskInstance, config: HyperparamConfig) -> Result<ScoreRecord> {
        let responses = self.settings.generate(self.backend, &instance.input, config)?;
        let scores = responses
            .iter()
            .map(|r| self.scorer.score(instance, r).map(|s| s.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreRecord::new(instance.id.clone(), config, scores))
    }

    /// Evaluates every pair, reusing memoised records. Output follows input order.
    pub fn evaluate_all(&self, pairs: &[(&TaskInstance, HyperparamConfig)]) -> Result<Vec<ScoreRecord>> {
        let missing: Vec<(&TaskInstance, HyperparamConfig)> = {
            let cache = self.cache.lock().expect("cache poisoned");
            let mut seen = std::collections::HashSet::new();
            pairs
                .iter()
                .filter(|(i, c)| !cache.contains_key(&(i.id.clone(), *c)) && seen.insert((i.id.clone(), *c)))
                .copied()
                .collect()
        };
        if !missing.is_empty() {
            let threads = self.parallelism.min(self.backend.max_parallelism()).max(1);
            let fresh: Vec<Result<ScoreRecord>> = if threads == 1 {
                missing.iter().map(|(i, c)| self.evaluate_one(i, *c)).collect()
            } else {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                pool.install(|| missing.par_iter().map(|(i, c)| self.evaluate_one(i, *c)).collect())
            };
            let mut done = Vec::new();
            let mut failure = None;
            for record in fresh {
                match record {
                    Ok(r) => done.push(r),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            }
            done.sort_by(|a, b| a.instance_id.cmp(&b.instance_id).then(a.config.cmp(&b.config)));
            *self.queries.lock().expect("counter poisoned") += done.len();
            self.append_checkpoint(&done)?;
            {
                let mut cache = self.cache.lock().expect("cache poisoned");
                for r in done {
                    cache.insert((r.instance_id.clone(), r.config), r);
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        let cache = self.cache.lock().expect("cache poisoned");
        Ok(pairs.iter().map(|(i, c)| cache[&(i.id.clone(), *c)].clone()).collect())
    }

    pub fn evaluate(&self, instance: &TaskInstance, config: HyperparamConfig) -> Result<ScoreRecord> {
        Ok(self.evaluate_all(&[(instance, config)])?.remove(0))
    }

    fn append_checkpoint(&self, records: &[ScoreRecord]) -> Result<()> {
        let Some(path) = &self.checkpoint else {
            return Ok(());
        };
        if records.is_empty() {
            return Ok(());
        }
        let file = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in records {
            writeln!(out, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Rewrites the checkpoint with every record in sorted order, so the file
    /// does not depend on how the run was interrupted or scheduled.
    pub fn finalize_checkpoint(&self) -> Result<()> {
        let Some(path) = &self.checkpoint else {
            return Ok(());
        };
        let mut records: Vec<ScoreRecord> = self.cache.lock().expect("cache poisoned").values().cloned().collect();
        records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id).then(a.config.cmp(&b.config)));
        let header = CheckpointHeader {
            checkpoint: 1,
            fingerprint: self.fingerprint(),
        };
        let mut text = format!("{}\n", serde_json::to_string(&header)?);
        for r in records {
            text.push_str(&serde_json::to_string(&r)?);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A config that cleared the pruning threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survivor {
    pub config: HyperparamConfig,
    /// Sum over probe instances of the per-instance mean score.
    pub cumulative: f64,
    pub probe_mean: f64,
}

/// Keeps configs whose mean probe score is at least `threshold` (raw units).
pub fn prune(
    configs: &[HyperparamConfig],
    probe: &[TaskInstance],
    evaluator: &Evaluator<'_>,
    threshold: f64,
) -> Result<Vec<Survivor>> {
    if probe.is_empty() {
        return Err(Error::Search("pruning needs at least one probe instance".into()));
    }
    let pairs: Vec<(&TaskInstance, HyperparamConfig)> = configs
        .iter()
        .flat_map(|c| probe.iter().map(move |i| (i, *c)))
        .collect();
    let records = evaluator.evaluate_all(&pairs)?;
    let survivors: Vec<Survivor> = records
        .chunks(probe.len())
        .zip(configs)
        .filter_map(|(chunk, config)| {
            let cumulative: f64 = chunk.iter().map(|r| r.mean_score).sum();
            let probe_mean = cumulative / probe.len() as f64;
            (probe_mean >= threshold).then_some(Survivor {
                config: *config,
                cumulative,
                probe_mean,
            })
        })
        .collect();
    if survivors.is_empty() {
        return Err(Error::Search(format!(
            "no config reached the pruning threshold {threshold}; lower the threshold"
        )));
    }
    Ok(survivors)
}

/// Top `keep` survivors by cumulative score; ties go to the smaller config.
pub fn greedy_select(survivors: &[Survivor], keep: usize) -> Vec<Survivor> {
    let mut ranked = survivors.to_vec();
    ranked.sort_by(|a, b| b.cumulative.total_cmp(&a.cumulative).then(a.config.cmp(&b.config)));
    ranked.truncate(keep.max(1));
    ranked
}

/// One exported training example: the instruction and its target config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub task: TaskKind,
    pub instance_id: String,
    pub input_text: String,
    pub target_config: HyperparamConfig,
    pub rendered_target: String,
    pub best_score: f64,
    pub default_score: f64,
}

/// Per-instance best config with the global-frequency tie-break.
///
/// Pass 1 counts instances with a unique best config; pass 2 resolves every
/// tie toward the config with the most pass-1 wins, then the smallest config.
pub fn assign_targets(
    candidates: &[HyperparamConfig],
    instances: &[TaskInstance],
    evaluator: &Evaluator<'_>,
    default_config: HyperparamConfig,
) -> Result<Vec<TrainingPair>> {
    if candidates.is_empty() || instances.is_empty() {
        return Err(Error::Search("target assignment needs candidates and instances".into()));
    }
    let table = evaluate_table(candidates, instances, evaluator)?;
    let defaults = evaluator.evaluate_all(&instances.iter().map(|i| (i, default_config)).collect::<Vec<_>>())?;

    let winners: Vec<Vec<HyperparamConfig>> = table.iter().map(|row| best_configs(candidates, row)).collect();
    let mut frequency: HashMap<HyperparamConfig, usize> = HashMap::new();
    for w in winners.iter().filter(|w| w.len() == 1) {
        *frequency.entry(w[0]).or_insert(0) += 1;
    }
    Ok(instances
        .iter()
        .zip(&winners)
        .zip(table.iter().zip(&defaults))
        .map(|((instance, tied), (row, default))| {
            let target = *tied
                .iter()
                .min_by(|a, b| {
                    let fa = frequency.get(a).copied().unwrap_or(0);
                    let fb = frequency.get(b).copied().unwrap_or(0);
                    fb.cmp(&fa).then(a.cmp(b))
                })
                .expect("at least one winner");
            let best_score = row.iter().map(|r| r.mean_score).fold(f64::NEG_INFINITY, f64::max);
            TrainingPair {
                task: instance.task,
                instance_id: instance.id.clone(),
                input_text: instance.input.clone(),
                target_config: target,
                rendered_target: render_config_text(&target),
                best_score,
                default_score: default.mean_score,
            }
        })
        .collect())
}

/// Rows = instances, columns = candidates.
fn evaluate_table(
    candidates: &[HyperparamConfig],
    instances: &[TaskInstance],
    evaluator: &Evaluator<'_>,
) -> Result<Vec<Vec<ScoreRecord>>> {
    let pairs: Vec<(&TaskInstance, HyperparamConfig)> = instances
        .iter()
        .flat_map(|i| candidates.iter().map(move |c| (i, *c)))
        .collect();
    let records = evaluator.evaluate_all(&pairs)?;
    Ok(records.chunks(candidates.len()).map(<[ScoreRecord]>::to_vec).collect())
}

fn best_configs(candidates: &[HyperparamConfig], row: &[ScoreRecord]) -> Vec<HyperparamConfig> {
    let best = row.iter().map(|r| r.mean_score).fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .zip(row)
        .filter(|(_, r)| r.mean_score == best)
        .map(|(c, _)| *c)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceBest {
    pub instance_id: String,
    pub config: HyperparamConfig,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// Mean over instances of the best candidate's mean score (raw units).
    pub score: f64,
    pub per_instance: Vec<InstanceBest>,
}

/// Best achievable score when every instance gets its best candidate.
pub fn upper_bound(
    candidates: &[HyperparamConfig],
    instances: &[TaskInstance],
    evaluator: &Evaluator<'_>,
) -> Result<UpperBound> {
    let pairs = assign_targets_without_default(candidates, instances, evaluator)?;
    let per_instance: Vec<InstanceBest> = pairs
        .into_iter()
        .map(|(instance_id, config, score)| InstanceBest {
            instance_id,
            config,
            score,
        })
        .collect();
    let scores: Vec<f64> = per_instance.iter().map(|b| b.score).collect();
    Ok(UpperBound {
        score: metrics::mean(&scores).unwrap_or(0.0),
        per_instance,
    })
}

fn assign_targets_without_default(
    candidates: &[HyperparamConfig],
    instances: &[TaskInstance],
    evaluator: &Evaluator<'_>,
) -> Result<Vec<(String, HyperparamConfig, f64)>> {
    if candidates.is_empty() || instances.is_empty() {
        return Err(Error::Search("upper bound needs candidates and instances".into()));
    }
    let table = evaluate_table(candidates, instances, evaluator)?;
    let winners: Vec<Vec<HyperparamConfig>> = table.iter().map(|row| best_configs(candidates, row)).collect();
    let mut frequency: HashMap<HyperparamConfig, usize> = HashMap::new();
    for w in winners.iter().filter(|w| w.len() == 1) {
        *frequency.entry(w[0]).or_insert(0) += 1;
    }
    Ok(instances
        .iter()
        .zip(winners.iter().zip(&table))
        .map(|(instance, (tied, row))| {
            let target = *tied
                .iter()
                .min_by(|a, b| {
                    let fa = frequency.get(a).copied().unwrap_or(0);
                    let fb = frequency.get(b).copied().unwrap_or(0);
                    fb.cmp(&fa).then(a.cmp(b))
                })
                .expect("at least one winner");
            let best = row.iter().map(|r| r.mean_score).fold(f64::NEG_INFINITY, f64::max);
            (instance.id.clone(), target, best)
        })
        .collect())
}

/// Result of a full prune + greedy + assignment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub task: TaskKind,
    pub space_size: usize,
    pub pruned: usize,
    pub survivors: Vec<Survivor>,
    pub candidates: Vec<Survivor>,
    pub pairs: Vec<TrainingPair>,
}

/// Probe = first `prune_subset_size` instances; assignment runs over the
/// first `train_size` instances.
pub fn run_search(
    configs: &[HyperparamConfig],
    instances: &[TaskInstance],
    plan: &SearchPlan,
    evaluator: &Evaluator<'_>,
    default_config: HyperparamConfig,
) -> Result<SearchOutcome> {
    plan.validate()?;
    let task = instances
        .first()
        .map(|i| i.task)
        .ok_or_else(|| Error::Search("no training instances".into()))?;
    if instances.iter().any(|i| i.task != task) {
        return Err(Error::Search("search instances must all belong to one task".into()));
    }
    let probe = &instances[..plan.prune_subset_size.min(instances.len())];
    let train = &instances[..plan.train_size.min(instances.len())];
    let survivors = prune(configs, probe, evaluator, plan.raw_threshold(task))?;
    let candidates = greedy_select(&survivors, plan.greedy_keep);
    let candidate_configs: Vec<HyperparamConfig> = candidates.iter().map(|s| s.config).collect();
    let pairs = assign_targets(&candidate_configs, train, evaluator, default_config)?;
    Ok(SearchOutcome {
        task,
        space_size: configs.len(),
        pruned: configs.len() - survivors.len(),
        survivors,
        candidates,
        pairs,
    })
}

/// Same probe + greedy procedure applied to test instances, ending in the
/// per-instance maxima instead of training pairs.
pub fn search_upper_bound(
    configs: &[HyperparamConfig],
    instances: &[TaskInstance],
    plan: &SearchPlan,
    evaluator: &Evaluator<'_>,
) -> Result<(Vec<HyperparamConfig>, UpperBound)> {
    let task = instances
        .first()
        .map(|i| i.task)
        .ok_or_else(|| Error::Search("no test instances".into()))?;
    let probe = &instances[..plan.prune_subset_size.min(instances.len())];
    let survivors = prune(configs, probe, evaluator, plan.raw_threshold(task))?;
    let candidates: Vec<HyperparamConfig> = greedy_select(&survivors, plan.greedy_keep)
        .into_iter()
        .map(|s| s.config)
        .collect();
    let ub = upper_bound(&candidates, instances, evaluator)?;
    Ok((candidates, ub))
}

/// Fixed-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal-width bins over [lo, hi]; the last bin is closed.
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = if hi > lo { bins.max(1) } else { 1 };
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let idx = if hi > lo {
                (((v - lo) / width).floor() as usize).min(bins - 1)
            } else {
                0
            };
            counts[idx] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskYield {
    pub task: TaskKind,
    pub pairs: usize,
    pub mean_best: f64,
    pub mean_default: f64,
    /// (best - default) / |default| * 100.
    pub improvement: RelativeChange,
    pub best_histogram: Histogram,
    pub default_histogram: Histogram,
    /// best - default per instance, in export order.
    pub differences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub tasks: Vec<TaskYield>,
}

pub const YIELD_BINS: usize = 10;

/// Data-yield statistics of searched targets against the default config.
pub fn yield_report(pairs: &[TrainingPair]) -> Result<YieldReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("yield report needs at least one pair".into()));
    }
    let mut by_task: BTreeMap<TaskKind, Vec<&TrainingPair>> = BTreeMap::new();
    for p in pairs {
        by_task.entry(p.task).or_default().push(p);
    }
    let tasks = by_task
        .into_iter()
        .map(|(task, group)| {
            let best: Vec<f64> = group.iter().map(|p| p.best_score).collect();
            let default: Vec<f64> = group.iter().map(|p| p.default_score).collect();
            let mean_best = metrics::mean(&best).unwrap_or(0.0);
            let mean_default = metrics::mean(&default).unwrap_or(0.0);
            let lo = best.iter().chain(&default).copied().fold(f64::INFINITY, f64::min);
            let hi = best.iter().chain(&default).copied().fold(f64::NEG_INFINITY, f64::max);
            TaskYield {
                task,
                pairs: group.len(),
                mean_best,
                mean_default,
                improvement: relative_change(mean_best, mean_default),
                best_histogram: Histogram::build(&best, lo, hi, YIELD_BINS),
                default_histogram: Histogram::build(&default, lo, hi, YIELD_BINS),
                differences: group.iter().map(|p| p.best_score - p.default_score).collect(),
            }
        })
        .collect();
    Ok(YieldReport { tasks })
}

/// SFT export: `{"instruction", "output", "meta": {...}}` per line.
pub fn write_pairs_jsonl(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let line = serde_json::json!({
            "instruction": p.input_text,
            "output": p.rendered_target,
            "meta": {
                "task": p.task,
                "id": p.instance_id,
                "best_score": p.best_score,
                "default_score": p.default_score,
            }
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an SFT export back into pairs, e.g. as few-shot demonstrations.
pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<TrainingPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fallback = crate::space::TOY_DEFAULT;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let at = |msg: &str| Error::Data(format!("{}: line {}: {msg}", path.display(), n + 1));
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| at(&e.to_string()))?;
            let instruction = v["instruction"].as_str().ok_or_else(|| at("missing `instruction`"))?;
            let output = v["output"].as_str().ok_or_else(|| at("missing `output`"))?;
            let (config, status) = crate::space::parse_config_text(output, &fallback);
            if status == crate::space::ParseStatus::Fallback {
                return Err(at("`output` is not a config"));
            }
            let meta = &v["meta"];
            let task = meta["task"]
                .as_str()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| at("missing `meta.task`"))?;
            Ok(TrainingPair {
                task,
                instance_id: meta["id"].as_str().unwrap_or_default().to_owned(),
                input_text: instruction.to_owned(),
                target_config: config,
                rendered_target: output.to_owned(),
                best_score: meta["best_score"].as_f64().unwrap_or(0.0),
                default_score: meta["default_score"].as_f64().unwrap_or(0.0),
            })
        })
        .collect()
}

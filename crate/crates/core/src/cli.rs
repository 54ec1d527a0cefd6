//! Command-line front end: one subcommand per workflow.
//!
//! | command       | writes                                                      |
//! |---------------|-------------------------------------------------------------|
//! | `sensitivity` | `sensitivity.csv`                                           |
//! | `search`      | `pairs-<task>.jsonl`, `yield-<task>.json`, checkpoint       |
//! | `run`         | `traces-<task>-<strategy>.jsonl`                            |
//! | `eval`        | `evaluation.json`                                           |
//! | `report`      | `report.{md,csv,json}`, `distributions.json`, `difficulty.csv`, `sensitivity.csv` |
//! | `upper-bound` | `upper-bound-<task>.json`                                   |
//!
//! Each command also writes `manifest-<command>.json`. Exit status: 0 on
//! success, 1 for validation errors, 2 for transport errors, 3 for search
//! errors. API tokens are read from the environment variable named in the
//! endpoint file, never from flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{Backend, EndpointSpec, RemoteBackend, ScriptedBackend, ToyBackend, ToyModel};
use crate::error::{Error, Result};
use crate::metrics::BleuOptions;
use crate::report::{self, EvalReport, Manifest, StrategyResult, UpperBoundEntry};
use crate::runner::{self, ConfigSelection, ModelFamily, PromptTemplate, ResponseSettings, RunPlan, Strategy};
use crate::search::{self, Evaluator, InstanceBest, SearchPlan};
use crate::space::{default_config, Axis, BackendKind, ConfigSpace, HyperparamConfig, TOY_DEFAULT};
use crate::tasks::{load_instances, Dictionary, Scorer, TaskInstance, TaskKind};

#[derive(Debug, Parser)]
#[command(
    name = "hag",
    version,
    about = "Hyperparameter-aware generation: config search, runs and reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-BLEU of sampled outputs while one decoding axis varies.
    Sensitivity(SensitivityArgs),
    /// Prune + greedy search for per-instance target configs.
    Search(SearchArgs),
    /// Run one strategy over the task instances and log traces.
    Run(RunArgs),
    /// Score trace logs.
    Eval(EvalArgs),
    /// Build the report bundle from trace logs and upper-bound files.
    Report(ReportArgs),
    /// Best score reachable by per-instance config choice on test instances.
    UpperBound(UpperBoundArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// toy, remote or scripted.
    #[arg(long, default_value = "toy")]
    pub backend: BackendKind,
    /// Toy backend training text, or a saved toy model (`.json`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Toy n-gram order.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Toy additive smoothing.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Remote endpoint description (JSON).
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    /// Scripted backend responses, one per line.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Default-config file overriding the backend's built-in default.
    #[arg(long)]
    pub defaults: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Task instances (JSONL); repeatable.
    #[arg(long = "task-file", required = true)]
    pub task_files: Vec<PathBuf>,
    /// Word list for Spelling Bee scoring.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per (instance, config).
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenerationArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Directory with `<family>_stage{1,2}.txt`; built-in templates otherwise.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value = "plain")]
    pub family: ModelFamily,
    /// Config-space override (JSON, one array per axis).
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Maximum concurrent generations.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[arg(long, default_value = "temperature")]
    pub axis: Axis,
    /// Comma-separated axis values; 5 evenly spaced values by default.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Probe instances per task.
    #[arg(long, default_value_t = 5)]
    pub probe: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// Search plan (sizes and thresholds, JSON).
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    /// random, default, hag-sft or hag-icl.
    #[arg(long)]
    pub strategy: Strategy,
    /// Stage-1 backend: `same`, `oracle:<pairs.jsonl>`, `script:<file>` or
    /// `endpoint:<file>`.
    #[arg(long, default_value = "same")]
    pub stage1: String,
    /// Demonstrations for hag-icl (pairs JSONL from `search`).
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long, default_value_t = runner::DEFAULT_ICL_K)]
    pub icl_k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trace logs from `run`; repeatable.
    #[arg(long, required = true)]
    pub traces: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, required = true)]
    pub traces: Vec<PathBuf>,
    /// Upper-bound files from `upper-bound`; repeatable.
    #[arg(long = "upper-bound")]
    pub upper_bound: Vec<PathBuf>,
    /// sensitivity.csv from `sensitivity`, copied into the bundle.
    #[arg(long)]
    pub sensitivity: Option<PathBuf>,
    /// Recorded in the manifest.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Recorded in the manifest.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value = "plain")]
    pub family: ModelFamily,
}

#[derive(Debug, Clone, Args)]
pub struct UpperBoundArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

/// Written by `upper-bound`, read by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundFile {
    pub task: TaskKind,
    pub model: String,
    pub score: f64,
    pub candidates: Vec<HyperparamConfig>,
    pub per_instance: Vec<InstanceBest>,
}

/// Parses `args` (program name first) and runs the command; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Search(a) => cmd_search(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
        Command::UpperBound(a) => cmd_upper_bound(a),
    }
}

fn require_file(flag: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "--{flag} path does not exist: {}",
            path.display()
        )))
    }
}

fn check_optional(flag: &str, path: &Option<PathBuf>) -> Result<()> {
    path.as_deref().map_or(Ok(()), |p| require_file(flag, p))
}

impl DataArgs {
    fn validate(&self) -> Result<()> {
        for f in &self.task_files {
            require_file("task-file", f)?;
        }
        check_optional("dictionary", &self.dictionary)?;
        if self.samples == 0 {
            return Err(Error::Config("--samples must be at least 1".into()));
        }
        if self.out.exists() && !self.out.is_dir() {
            return Err(Error::Config(format!(
                "--out is not a directory: {}",
                self.out.display()
            )));
        }
        Ok(())
    }

    /// Instances grouped by task, file order preserved within a task.
    fn load(&self) -> Result<BTreeMap<TaskKind, Vec<TaskInstance>>> {
        let mut grouped: BTreeMap<TaskKind, Vec<TaskInstance>> = BTreeMap::new();
        for f in &self.task_files {
            for instance in load_instances(f, None)? {
                grouped.entry(instance.task).or_default().push(instance);
            }
        }
        Ok(grouped)
    }

    fn scorer(&self) -> Result<Scorer> {
        Ok(match &self.dictionary {
            Some(path) => Scorer::with_dictionary(Dictionary::from_file(path)?),
            None => Scorer::new(),
        })
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }
}

impl BackendArgs {
    fn validate(&self) -> Result<()> {
        check_optional("corpus", &self.corpus)?;
        check_optional("endpoint", &self.endpoint)?;
        check_optional("script", &self.script)?;
        check_optional("defaults", &self.defaults)?;
        let (flag, given) = match self.backend {
            BackendKind::Toy => ("corpus", self.corpus.is_some()),
            BackendKind::Remote => ("endpoint", self.endpoint.is_some()),
            BackendKind::Scripted => ("script", self.script.is_some()),
        };
        if !given {
            return Err(Error::Config(format!(
                "--backend {} needs --{flag}",
                self.backend_name()
            )));
        }
        Ok(())
    }

    fn backend_name(&self) -> &'static str {
        match self.backend {
            BackendKind::Toy => "toy",
            BackendKind::Remote => "remote",
            BackendKind::Scripted => "scripted",
        }
    }

    fn build(&self) -> Result<Box<dyn Backend>> {
        let override_default = self
            .defaults
            .as_deref()
            .map(|p| default_config(BackendKind::Remote, Some(p)))
            .transpose()?;
        Ok(match self.backend {
            BackendKind::Toy => {
                let path = self.corpus.as_deref().expect("validated");
                let model = if path.extension().is_some_and(|e| e == "json") {
                    ToyModel::load(path)?
                } else {
                    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    ToyModel::train(&text, self.order, self.alpha)?
                };
                Box::new(ToyBackend::new(model).with_default(override_default.unwrap_or(TOY_DEFAULT)))
            }
            BackendKind::Remote => {
                let spec = EndpointSpec::from_file(self.endpoint.as_deref().expect("validated"))?;
                Box::new(match override_default {
                    Some(d) => RemoteBackend::with_default(spec, d),
                    None => RemoteBackend::new(spec)?,
                })
            }
            BackendKind::Scripted => Box::new(scripted_from_file(self.script.as_deref().expect("validated"))?),
        })
    }
}

fn scripted_from_file(path: &Path) -> Result<ScriptedBackend> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScriptedBackend::new(text.lines().map(str::to_owned))
}

impl GenerationArgs {
    fn validate(&self) -> Result<()> {
        self.backend.validate()?;
        check_optional("templates", &self.templates)?;
        check_optional("space", &self.space)?;
        if self.parallel == 0 {
            return Err(Error::Config("--parallel must be at least 1".into()));
        }
        Ok(())
    }

    fn space(&self) -> Result<ConfigSpace> {
        self.space
            .as_deref()
            .map_or_else(|| Ok(ConfigSpace::default()), ConfigSpace::from_file)
    }

    fn template(&self, stage: u8) -> Result<PromptTemplate> {
        load_template(self.templates.as_deref(), self.family, stage)
    }

    fn response(&self, data: &DataArgs) -> Result<ResponseSettings> {
        Ok(ResponseSettings::new(
            self.template(2)?,
            data.samples,
            self.max_new_tokens,
            data.seed,
        ))
    }
}

fn load_template(dir: Option<&Path>, family: ModelFamily, stage: u8) -> Result<PromptTemplate> {
    match dir {
        Some(dir) => PromptTemplate::load(dir, family, stage),
        None => Ok(PromptTemplate::builtin(family, stage)),
    }
}

fn load_plan(path: &Option<PathBuf>) -> Result<SearchPlan> {
    path.as_deref()
        .map_or_else(|| Ok(SearchPlan::default()), SearchPlan::from_file)
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Input files keyed by file name, valued by content hash.
fn input_digests<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<BTreeMap<String, String>> {
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, file_digest(p)?))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct CommandManifest {
    command: &'static str,
    version: &'static str,
    seed: u64,
    samples: usize,
    inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    default_config: Option<HyperparamConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    space: Option<ConfigSpace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plan: Option<SearchPlan>,
    template_hashes: BTreeMap<String, String>,
    bleu: BleuOptions,
    parameters: BTreeMap<String, serde_json::Value>,
}

impl CommandManifest {
    fn new(command: &'static str, data: &DataArgs) -> Result<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: data.seed,
            samples: data.samples,
            inputs: input_digests(data.task_files.iter().chain(&data.dictionary))?,
            backend: None,
            default_config: None,
            space: None,
            plan: None,
            template_hashes: BTreeMap::new(),
            bleu: BleuOptions::default(),
            parameters: BTreeMap::new(),
        })
    }

    fn with_generation(mut self, generation: &GenerationArgs, backend: &dyn Backend) -> Result<Self> {
        let b = &generation.backend;
        self.inputs.extend(input_digests(
            [&b.corpus, &b.endpoint, &b.script, &b.defaults, &generation.space]
                .into_iter()
                .flatten(),
        )?);
        self.backend = Some(backend.id().to_owned());
        self.default_config = Some(backend.default_config());
        self.space = Some(generation.space()?);
        for stage in [1, 2] {
            let t = generation.template(stage)?;
            self.template_hashes
                .insert(format!("{}_stage{stage}", t.family.name()), t.sha256());
        }
        self.param("max_new_tokens", generation.max_new_tokens);
        self.param("parallel", generation.parallel);
        if b.backend == BackendKind::Toy {
            self.param("order", b.order);
            self.param("alpha", b.alpha);
        }
        Ok(self)
    }

    fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(
            key.to_owned(),
            serde_json::to_value(value).expect("parameter serialises"),
        );
    }

    fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(format!("manifest-{}.json", self.command));
        write_json(&path, self)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_sensitivity(args: &SensitivityArgs) -> Result<()> {
    args.data.validate()?;
    args.generation.validate()?;
    if args.probe == 0 {
        return Err(Error::Config("--probe must be at least 1".into()));
    }
    let tasks = args.data.load()?;
    let backend = args.generation.backend.build()?;
    let settings = args.generation.response(&args.data)?;
    let values = if args.values.is_empty() {
        report::sweep_values(args.axis, report::SENSITIVITY_POINTS)
    } else {
        args.values.clone()
    };
    args.data.prepare_out()?;
    let mut rows = Vec::new();
    for instances in tasks.values() {
        let probe = &instances[..args.probe.min(instances.len())];
        rows.extend(report::sensitivity_sweep(
            backend.as_ref(),
            probe,
            args.axis,
            &values,
            backend.default_config(),
            &settings,
            &BleuOptions::default(),
        )?);
    }
    write_text(
        &args.data.out.join("sensitivity.csv"),
        &report::render_sensitivity_csv(&rows),
    )?;
    let mut manifest =
        CommandManifest::new("sensitivity", &args.data)?.with_generation(&args.generation, backend.as_ref())?;
    manifest.param("axis", args.axis);
    manifest.param("values", &values);
    manifest.param("probe", args.probe);
    manifest.write(&args.data.out)?;
    for r in &rows {
        println!(
            "{}={} self-bleu {:.4} (var {:.4})",
            r.axis.name(),
            r.value,
            r.mean_self_bleu,
            r.variance
        );
    }
    Ok(())
}

pub fn cmd_search(args: &SearchArgs) -> Result<()> {
    args.data.validate()?;
    args.generation.validate()?;
    check_optional("plan", &args.plan)?;
    let plan = load_plan(&args.plan)?;
    let tasks = args.data.load()?;
    let backend = args.generation.backend.build()?;
    let scorer = args.data.scorer()?;
    let configs = args.generation.space()?.enumerate();
    args.data.prepare_out()?;
    for (task, instances) in &tasks {
        let evaluator = Evaluator::new(backend.as_ref(), &scorer, args.generation.response(&args.data)?)
            .with_parallelism(args.generation.parallel)
            .with_checkpoint(args.data.out.join(format!("checkpoint-{task}.jsonl")))?;
        let outcome = search::run_search(&configs, instances, &plan, &evaluator, backend.default_config());
        // keep finished evaluations even when the search itself fails
        evaluator.finalize_checkpoint()?;
        let outcome = outcome?;
        search::write_pairs_jsonl(&args.data.out.join(format!("pairs-{task}.jsonl")), &outcome.pairs)?;
        let yields = search::yield_report(&outcome.pairs)?;
        write_json(&args.data.out.join(format!("yield-{task}.json")), &yields)?;
        let summary = serde_json::json!({
            "task": task,
            "space_size": outcome.space_size,
            "pruned": outcome.pruned,
            "survivors": outcome.survivors,
            "candidates": outcome.candidates,
        });
        write_json(&args.data.out.join(format!("search-{task}.json")), &summary)?;
        let y = &yields.tasks[0];
        println!(
            "{task}: {} of {} configs pruned, {} pairs, best {:.4} vs default {:.4} ({})",
            outcome.pruned,
            outcome.space_size,
            outcome.pairs.len(),
            y.mean_best,
            y.mean_default,
            y.improvement
        );
    }
    let mut manifest =
        CommandManifest::new("search", &args.data)?.with_generation(&args.generation, backend.as_ref())?;
    manifest.plan = Some(plan);
    if let Some(p) = &args.plan {
        manifest.inputs.extend(input_digests([p])?);
    }
    manifest.write(&args.data.out)
}

fn stage1_backend(spec: &str) -> Result<Option<Box<dyn Backend>>> {
    if spec == "same" {
        return Ok(None);
    }
    let (kind, path) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("--stage1 must be `same` or `<kind>:<path>`, got `{spec}`")))?;
    let path = Path::new(path);
    require_file("stage1", path)?;
    Ok(Some(match kind {
        "oracle" => Box::new(runner::oracle_stage1(&search::read_pairs_jsonl(path)?)),
        "script" => Box::new(scripted_from_file(path)?.with_id("scripted-stage1")),
        "endpoint" => Box::new(RemoteBackend::new(EndpointSpec::from_file(path)?)?),
        other => return Err(Error::Config(format!("unknown --stage1 kind `{other}`"))),
    }))
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    args.data.validate()?;
    args.generation.validate()?;
    check_optional("demos", &args.demos)?;
    if args.strategy == Strategy::HagIcl && args.demos.is_none() {
        return Err(Error::Config("--strategy hag-icl needs --demos".into()));
    }
    let tasks = args.data.load()?;
    let backend = args.generation.backend.build()?;
    let stage1 = stage1_backend(&args.stage1)?;
    let demonstrations = args
        .demos
        .as_deref()
        .map_or_else(|| Ok(Vec::new()), search::read_pairs_jsonl)?;
    if args.strategy == Strategy::HagIcl && demonstrations.len() < args.icl_k {
        return Err(Error::Config(format!(
            "--icl-k {} exceeds the {} demonstrations available",
            args.icl_k,
            demonstrations.len()
        )));
    }
    args.data.prepare_out()?;
    for (task, instances) in &tasks {
        let task_demos: Vec<_> = demonstrations.iter().filter(|d| d.task == *task).cloned().collect();
        let plan = RunPlan {
            strategy: args.strategy,
            backend: backend.as_ref(),
            stage1_backend: stage1.as_deref(),
            selection: ConfigSelection::new(args.generation.template(1)?, args.data.seed),
            response: args.generation.response(&args.data)?,
            space: args.generation.space()?,
            demonstrations: if task_demos.is_empty() {
                demonstrations.clone()
            } else {
                task_demos
            },
            icl_k: args.icl_k,
            parallelism: args.generation.parallel,
        };
        let traces = runner::run_strategy(instances, &plan);
        let path = args.data.out.join(format!("traces-{task}-{}.jsonl", args.strategy));
        runner::write_traces(&path, &traces)?;
        let failed = traces.iter().filter(|t| t.error.is_some()).count();
        let fallbacks = traces
            .iter()
            .filter(|t| t.parse_status == crate::space::ParseStatus::Fallback)
            .count();
        print!("{task} {}: {} traces, {failed} failed", args.strategy, traces.len());
        if args.strategy.is_hag() {
            print!(
                ", parse-failure rate {:.1}%",
                100.0 * fallbacks as f64 / traces.len().max(1) as f64
            );
        }
        println!();
    }
    let mut manifest = CommandManifest::new("run", &args.data)?.with_generation(&args.generation, backend.as_ref())?;
    manifest.param("strategy", args.strategy);
    manifest.param(
        "stage1",
        stage1
            .as_ref()
            .map_or_else(|| backend.id().to_owned(), |b| b.id().to_owned()),
    );
    if args.strategy == Strategy::HagIcl {
        manifest.param("icl_k", args.icl_k);
    }
    if let Some(d) = &args.demos {
        manifest.inputs.extend(input_digests([d])?);
    }
    manifest.write(&args.data.out)
}

fn score_logs(data: &DataArgs, logs: &[PathBuf]) -> Result<(Vec<runner::HagTrace>, Vec<StrategyResult>)> {
    for t in logs {
        require_file("traces", t)?;
    }
    let instances: Vec<TaskInstance> = data.load()?.into_values().flatten().collect();
    let mut traces = Vec::new();
    for t in logs {
        traces.extend(runner::read_traces(t)?);
    }
    let results = report::score_traces(&traces, &instances, &data.scorer()?, data.samples)?;
    Ok((traces, results))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    args.data.validate()?;
    let (_, results) = score_logs(&args.data, &args.traces)?;
    args.data.prepare_out()?;
    write_json(&args.data.out.join("evaluation.json"), &results)?;
    for r in &results {
        let score = r.score.map_or_else(
            || "incomplete".to_owned(),
            |s| format!("{:.2}", s * r.task.display_scale()),
        );
        println!(
            "{} {} {}: {score} ({} incomplete)",
            r.model, r.task, r.strategy, r.incomplete
        );
    }
    let mut manifest = CommandManifest::new("eval", &args.data)?;
    manifest.inputs.extend(input_digests(&args.traces)?);
    manifest.write(&args.data.out)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    args.data.validate()?;
    for f in &args.upper_bound {
        require_file("upper-bound", f)?;
    }
    check_optional("sensitivity", &args.sensitivity)?;
    check_optional("space", &args.space)?;
    check_optional("plan", &args.plan)?;
    check_optional("templates", &args.templates)?;
    let (traces, results) = score_logs(&args.data, &args.traces)?;
    let upper_bounds = args
        .upper_bound
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let ub: UpperBoundFile =
                serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            Ok(UpperBoundEntry {
                task: ub.task,
                model: ub.model,
                score: ub.score,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut manifest = Manifest {
        seeds: BTreeMap::from([("base".to_owned(), args.data.seed)]),
        space: Some(
            args.space
                .as_deref()
                .map_or_else(|| Ok(ConfigSpace::default()), ConfigSpace::from_file)?,
        ),
        plan: Some(load_plan(&args.plan)?),
        bleu: BleuOptions::default(),
        samples: args.data.samples,
        backends: traces.iter().map(|t| t.model.clone()).collect(),
        ..Default::default()
    };
    for stage in [1, 2] {
        let t = load_template(args.templates.as_deref(), args.family, stage)?;
        manifest
            .template_hashes
            .insert(format!("{}_stage{stage}", t.family.name()), t.sha256());
    }
    manifest.notes.insert(
        "relative_change".into(),
        "(strategy - default) / |default| * 100, on raw scores".into(),
    );
    manifest.notes.insert(
        "bleu".into(),
        "sentence BLEU-4, add-one smoothing of zero-match orders >= 2".into(),
    );

    let eval = EvalReport::new(manifest, results, upper_bounds);
    let out = &args.data.out;
    args.data.prepare_out()?;
    report::write_report(out, &eval)?;

    let hag: Vec<runner::HagTrace> = traces.iter().filter(|t| t.strategy.is_hag()).cloned().collect();
    let distributions = report::export_distributions(&hag);
    write_text(
        &out.join("distributions.json"),
        &report::render_distributions_json(&distributions),
    )?;

    let instances: Vec<TaskInstance> = args.data.load()?.into_values().flatten().collect();
    let difficulty = report::difficulty_sweep(&eval.results, &instances);
    write_text(&out.join("difficulty.csv"), &report::render_difficulty_csv(&difficulty))?;

    let sensitivity = match &args.sensitivity {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => report::render_sensitivity_csv(&[]),
    };
    write_text(&out.join("sensitivity.csv"), &sensitivity)?;

    print!("{}", report::render_markdown(&eval));
    let mut manifest = CommandManifest::new("report", &args.data)?;
    manifest.inputs.extend(input_digests(
        args.traces.iter().chain(&args.upper_bound).chain(&args.sensitivity),
    )?);
    manifest.write(out)
}

pub fn cmd_upper_bound(args: &UpperBoundArgs) -> Result<()> {
    args.data.validate()?;
    args.generation.validate()?;
    check_optional("plan", &args.plan)?;
    let plan = load_plan(&args.plan)?;
    let tasks = args.data.load()?;
    let backend = args.generation.backend.build()?;
    let scorer = args.data.scorer()?;
    let configs = args.generation.space()?.enumerate();
    args.data.prepare_out()?;
    for (task, instances) in &tasks {
        let evaluator = Evaluator::new(backend.as_ref(), &scorer, args.generation.response(&args.data)?)
            .with_parallelism(args.generation.parallel);
        let (candidates, ub) = search::search_upper_bound(&configs, instances, &plan, &evaluator)?;
        let file = UpperBoundFile {
            task: *task,
            model: backend.id().to_owned(),
            score: ub.score,
            candidates,
            per_instance: ub.per_instance,
        };
        write_json(&args.data.out.join(format!("upper-bound-{task}.json")), &file)?;
        println!("{task}: upper bound {:.2}", file.score * task.display_scale());
    }
    let mut manifest =
        CommandManifest::new("upper-bound", &args.data)?.with_generation(&args.generation, backend.as_ref())?;
    manifest.plan = Some(plan);
    manifest.write(&args.data.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_with_validation_status() {
        assert_eq!(main_with_args(["hag", "frobnicate"]), 1);
        assert_eq!(main_with_args(["hag", "--help"]), 0);
    }

    #[test]
    fn missing_corpus_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let tasks = dir.path().join("t.jsonl");
        fs::write(&tasks, r#"{"task":"multiarith","id":"a","input":"1+1","reference":2}"#).unwrap();
        let out = dir.path().join("out");
        let code = main_with_args([
            "hag".as_ref(),
            "sensitivity".as_ref(),
            "--corpus".as_ref(),
            dir.path().join("missing.txt").as_os_str(),
            "--task-file".as_ref(),
            tasks.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 1);
        assert!(!out.exists());
    }

    #[test]
    fn stage1_spec_parsing() {
        assert!(stage1_backend("same").unwrap().is_none());
        assert!(stage1_backend("oracle").is_err());
        assert!(stage1_backend("bogus:/nonexistent").is_err());
    }
}

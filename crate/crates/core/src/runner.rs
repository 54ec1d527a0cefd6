//! Two-stage hyperparameter-aware generation and its baselines.
//!
//! Stage 1 asks a model for a decoding config, either through a fine-tuned
//! endpoint (`hag_sft`) or a few-shot prompt (`hag_icl`). The text is parsed
//! with [`parse_config_text`]; stage 2 then samples the answer under that
//! config. The Default and Random strategies skip stage 1.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{Backend, FnBackend, GenerationRequest};
use crate::error::{Error, Result};
use crate::search::TrainingPair;
use crate::space::{parse_config_text, ConfigSpace, HyperparamConfig, ParseStatus};
use crate::tasks::TaskInstance;

pub const PLACEHOLDER: &str = "{user's question}";
pub const CONFIG_INSTRUCTION: &str = "Provide the config in JSON-format";

/// Instruction that opens every few-shot stage-1 prompt.
pub const ICL_HEADER: &str = "Please act as a hyperparameter selector and provide the best suitable hyperparameter config based on the input question. Provide the config in JSON-format: {'temperature':$, 'top_p':$, 'top_k':$, 'repetition_penalty':$}";

/// Number of demonstrations in a few-shot stage-1 prompt.
pub const DEFAULT_ICL_K: usize = 32;

/// Independent whole-run replications averaged for the Random baseline.
pub const RANDOM_REPLICATES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Llama,
    Mistral,
    Vicuna,
    Plain,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Llama => "llama",
            ModelFamily::Mistral => "mistral",
            ModelFamily::Vicuna => "vicuna",
            ModelFamily::Plain => "plain",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "llama" => Ok(ModelFamily::Llama),
            "mistral" => Ok(ModelFamily::Mistral),
            "vicuna" => Ok(ModelFamily::Vicuna),
            "plain" => Ok(ModelFamily::Plain),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub family: ModelFamily,
    pub stage: u8,
    pub text: String,
}

fn builtin_text(family: ModelFamily, stage: u8) -> &'static str {
    match (family, stage) {
        (ModelFamily::Llama, 1) => include_str!("../templates/llama_stage1.txt"),
        (ModelFamily::Llama, _) => include_str!("../templates/llama_stage2.txt"),
        (ModelFamily::Mistral, 1) => include_str!("../templates/mistral_stage1.txt"),
        (ModelFamily::Mistral, _) => include_str!("../templates/mistral_stage2.txt"),
        (ModelFamily::Vicuna, 1) => include_str!("../templates/vicuna_stage1.txt"),
        (ModelFamily::Vicuna, _) => include_str!("../templates/vicuna_stage2.txt"),
        (ModelFamily::Plain, 1) => include_str!("../templates/plain_stage1.txt"),
        (ModelFamily::Plain, _) => include_str!("../templates/plain_stage2.txt"),
    }
}

impl PromptTemplate {
    pub fn new(family: ModelFamily, stage: u8, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if stage != 1 && stage != 2 {
            return Err(Error::Template(format!("stage must be 1 or 2, got {stage}")));
        }
        match text.matches(PLACEHOLDER).count() {
            1 => {}
            0 => return Err(Error::Template(format!("template lacks the {PLACEHOLDER} placeholder"))),
            n => return Err(Error::Template(format!("placeholder appears {n} times"))),
        }
        if stage == 1 && !text.contains(CONFIG_INSTRUCTION) {
            return Err(Error::Template(format!(
                "stage-1 template must contain \"{CONFIG_INSTRUCTION}\""
            )));
        }
        Ok(Self { family, stage, text })
    }

    /// Shipped template for a family and stage.
    pub fn builtin(family: ModelFamily, stage: u8) -> Self {
        Self::new(family, stage, strip_final_newline(builtin_text(family, stage)))
            .expect("built-in templates are valid")
    }

    /// Reads `<family>_stage<stage>.txt` from `dir`.
    pub fn load(dir: &Path, family: ModelFamily, stage: u8) -> Result<Self> {
        let path = dir.join(format!("{}_stage{stage}.txt", family.name()));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::new(family, stage, strip_final_newline(&text))
    }

    pub fn render(&self, question: &str) -> String {
        self.text.replacen(PLACEHOLDER, question, 1)
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

fn strip_final_newline(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}

/// Few-shot stage-1 prompt: header, `k` question/config demonstrations in
/// the given order, then the target question.
pub fn build_icl_prompt(demonstrations: &[TrainingPair], question: &str, k: usize) -> Result<String> {
    if k == 0 {
        return Err(Error::InvalidInput("ICL needs at least one demonstration".into()));
    }
    if demonstrations.len() < k {
        return Err(Error::InvalidInput(format!(
            "ICL asked for {k} demonstrations but only {} are available",
            demonstrations.len()
        )));
    }
    let mut prompt = String::from(ICL_HEADER);
    prompt.push_str("\n\n");
    for demo in &demonstrations[..k] {
        prompt.push_str("Question: ");
        prompt.push_str(&demo.input_text);
        prompt.push_str("\nConfig: ");
        prompt.push_str(&demo.rendered_target);
        prompt.push_str("\n\n");
    }
    prompt.push_str("Question: ");
    prompt.push_str(question);
    prompt.push_str("\nConfig:");
    Ok(prompt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Default,
    HagSft,
    HagIcl,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Default, Strategy::HagSft, Strategy::HagIcl];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Default => "default",
            Strategy::HagSft => "hag_sft",
            Strategy::HagIcl => "hag_icl",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Strategy::Random => "Random",
            Strategy::Default => "Default",
            Strategy::HagSft => "HAG",
            Strategy::HagIcl => "HAG (ICL)",
        }
    }

    pub fn is_hag(self) -> bool {
        matches!(self, Strategy::HagSft | Strategy::HagIcl)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "random" => Ok(Strategy::Random),
            "default" => Ok(Strategy::Default),
            "hag_sft" | "hag" => Ok(Strategy::HagSft),
            "hag_icl" => Ok(Strategy::HagIcl),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// How answers are sampled for scoring. Shared by the search evaluator and
/// stage 2 of the runner, so the same (instance, config) yields the same
/// samples in both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSettings {
    pub template: PromptTemplate,
    pub samples: usize,
    pub max_new_tokens: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl ResponseSettings {
    pub fn new(template: PromptTemplate, samples: usize, max_new_tokens: usize, base_seed: u64) -> Self {
        Self {
            template,
            samples,
            max_new_tokens,
            base_seed,
            stop: Vec::new(),
        }
    }

    /// Request for sample `index`; its seed is `base_seed + index`.
    pub fn request(&self, input: &str, config: HyperparamConfig, index: usize) -> GenerationRequest {
        GenerationRequest::new(
            self.template.render(input),
            config,
            self.max_new_tokens,
            self.base_seed.wrapping_add(index as u64),
        )
        .with_stop(self.stop.clone())
    }

    /// All samples for one input under one config.
    pub fn generate(&self, backend: &dyn Backend, input: &str, config: HyperparamConfig) -> Result<Vec<String>> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("samples must be at least 1".into()));
        }
        (0..self.samples)
            .map(|i| backend.generate(&self.request(input, config, i)).map(|r| r.text))
            .collect()
    }
}

/// Stage-1 settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSelection {
    pub template: PromptTemplate,
    /// Near-greedy decode used to obtain the config text.
    pub decode: HyperparamConfig,
    pub max_new_tokens: usize,
    pub seed: u64,
}

/// temperature 0.1, top_p 1.0, top_k 1, repetition_penalty 1.0.
pub const STAGE1_DECODE: HyperparamConfig = HyperparamConfig {
    temperature: 0.1,
    top_p: 1.0,
    top_k: 1,
    repetition_penalty: 1.0,
};

impl ConfigSelection {
    pub fn new(template: PromptTemplate, seed: u64) -> Self {
        Self {
            template,
            decode: STAGE1_DECODE,
            max_new_tokens: 96,
            seed,
        }
    }
}

/// Stage-1 mode.
#[derive(Debug, Clone, Copy)]
pub enum HagMode<'a> {
    /// The stage-1 backend was fine-tuned to emit configs.
    Sft,
    /// Few-shot prompting with the first `k` demonstrations.
    Icl {
        demonstrations: &'a [TrainingPair],
        k: usize,
    },
}

impl HagMode<'_> {
    pub fn strategy(&self) -> Strategy {
        match self {
            HagMode::Sft => Strategy::HagSft,
            HagMode::Icl { .. } => Strategy::HagIcl,
        }
    }
}

/// Everything needed to re-score a run offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HagTrace {
    pub instance_id: String,
    pub task: crate::tasks::TaskKind,
    /// Stage-2 backend id.
    pub model: String,
    pub strategy: Strategy,
    #[serde(default)]
    pub replicate: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_raw_output: Option<String>,
    pub parsed_config: HyperparamConfig,
    pub parse_status: ParseStatus,
    pub stage2_prompt: String,
    pub stage2_outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl HagTrace {
    pub fn is_complete(&self, samples: usize) -> bool {
        self.error.is_none() && self.stage2_outputs.len() == samples
    }
}

/// A failed run with whatever was recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{source} (instance {})", .partial.instance_id)]
pub struct RunError {
    #[source]
    pub source: Error,
    pub partial: Box<HagTrace>,
}

impl RunError {
    fn new(source: Error, mut partial: HagTrace) -> Self {
        partial.error = Some(source.to_string());
        Self {
            source,
            partial: Box::new(partial),
        }
    }
}

fn stage2(
    mut trace: HagTrace,
    backend: &dyn Backend,
    instance: &TaskInstance,
    response: &ResponseSettings,
) -> std::result::Result<HagTrace, RunError> {
    for i in 0..response.samples {
        let request = response.request(&instance.input, trace.parsed_config, i);
        match backend.generate(&request) {
            Ok(result) => trace.stage2_outputs.push(result.text),
            Err(e) => return Err(RunError::new(e, trace)),
        }
    }
    Ok(trace)
}

/// Stage 1 then stage 2 for one instance.
pub fn run_hag(
    instance: &TaskInstance,
    stage1_backend: &dyn Backend,
    stage2_backend: &dyn Backend,
    mode: HagMode<'_>,
    selection: &ConfigSelection,
    response: &ResponseSettings,
) -> std::result::Result<HagTrace, RunError> {
    let default = stage2_backend.default_config();
    let mut trace = HagTrace {
        instance_id: instance.id.clone(),
        task: instance.task,
        model: stage2_backend.id().to_owned(),
        strategy: mode.strategy(),
        replicate: 0,
        stage1_prompt: None,
        stage1_raw_output: None,
        parsed_config: default,
        parse_status: ParseStatus::Fallback,
        stage2_prompt: response.template.render(&instance.input),
        stage2_outputs: Vec::new(),
        error: None,
    };
    let prompt = match mode {
        HagMode::Sft => selection.template.render(&instance.input),
        HagMode::Icl { demonstrations, k } => match build_icl_prompt(demonstrations, &instance.input, k) {
            Ok(p) => p,
            Err(e) => return Err(RunError::new(e, trace)),
        },
    };
    trace.stage1_prompt = Some(prompt.clone());
    let request = GenerationRequest::new(prompt, selection.decode, selection.max_new_tokens, selection.seed);
    let raw = match stage1_backend.generate(&request) {
        Ok(r) => r.text,
        Err(e) => return Err(RunError::new(e, trace)),
    };
    let (config, status) = parse_config_text(&raw, &default);
    trace.stage1_raw_output = Some(raw);
    trace.parsed_config = config;
    trace.parse_status = status;
    stage2(trace, stage2_backend, instance, response)
}

/// Default or Random baseline for one instance.
pub fn run_baseline(
    instance: &TaskInstance,
    backend: &dyn Backend,
    strategy: Strategy,
    space: &ConfigSpace,
    rng: &mut ChaCha8Rng,
    response: &ResponseSettings,
) -> std::result::Result<HagTrace, RunError> {
    let config = match strategy {
        Strategy::Default => backend.default_config(),
        Strategy::Random => space.random_config(rng),
        other => {
            return Err(RunError::new(
                Error::InvalidInput(format!("{other} is not a baseline strategy")),
                HagTrace {
                    instance_id: instance.id.clone(),
                    task: instance.task,
                    model: backend.id().to_owned(),
                    strategy: other,
                    replicate: 0,
                    stage1_prompt: None,
                    stage1_raw_output: None,
                    parsed_config: backend.default_config(),
                    parse_status: ParseStatus::Fallback,
                    stage2_prompt: String::new(),
                    stage2_outputs: Vec::new(),
                    error: None,
                },
            ))
        }
    };
    let trace = HagTrace {
        instance_id: instance.id.clone(),
        task: instance.task,
        model: backend.id().to_owned(),
        strategy,
        replicate: 0,
        stage1_prompt: None,
        stage1_raw_output: None,
        parsed_config: config,
        parse_status: ParseStatus::Ok,
        stage2_prompt: response.template.render(&instance.input),
        stage2_outputs: Vec::new(),
        error: None,
    };
    stage2(trace, backend, instance, response)
}

/// Everything a whole-task run needs besides the instances.
pub struct RunPlan<'a> {
    pub strategy: Strategy,
    pub backend: &'a dyn Backend,
    /// Stage-1 backend for HAG strategies; defaults to `backend`.
    pub stage1_backend: Option<&'a dyn Backend>,
    pub selection: ConfigSelection,
    pub response: ResponseSettings,
    pub space: ConfigSpace,
    pub demonstrations: Vec<TrainingPair>,
    pub icl_k: usize,
    pub parallelism: usize,
}

/// Seed of the Random baseline's config draw for (replicate, instance index).
pub fn random_draw_seed(base_seed: u64, replicate: u32, index: usize) -> u64 {
    base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((replicate as u64) << 32)
        .wrapping_add(index as u64)
}

/// Runs a strategy over every instance; failures come back as traces with
/// `error` set. Output order follows (replicate, instance order).
pub fn run_strategy(instances: &[TaskInstance], plan: &RunPlan<'_>) -> Vec<HagTrace> {
    let replicates = if plan.strategy == Strategy::Random {
        RANDOM_REPLICATES
    } else {
        1
    };
    let jobs: Vec<(u32, usize)> = (0..replicates)
        .flat_map(|r| (0..instances.len()).map(move |i| (r, i)))
        .collect();
    let run_one = |&(replicate, index): &(u32, usize)| -> HagTrace {
        let instance = &instances[index];
        let outcome = match plan.strategy {
            Strategy::Default | Strategy::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(random_draw_seed(plan.response.base_seed, replicate, index));
                run_baseline(
                    instance,
                    plan.backend,
                    plan.strategy,
                    &plan.space,
                    &mut rng,
                    &plan.response,
                )
            }
            Strategy::HagSft | Strategy::HagIcl => {
                let mode = if plan.strategy == Strategy::HagSft {
                    HagMode::Sft
                } else {
                    HagMode::Icl {
                        demonstrations: &plan.demonstrations,
                        k: plan.icl_k,
                    }
                };
                let stage1 = plan.stage1_backend.unwrap_or(plan.backend);
                run_hag(instance, stage1, plan.backend, mode, &plan.selection, &plan.response)
            }
        };
        let mut trace = outcome.unwrap_or_else(|e| {
            log::warn!("{e}");
            *e.partial
        });
        trace.replicate = replicate;
        trace
    };
    let threads = plan
        .parallelism
        .min(plan.backend.max_parallelism())
        .min(plan.stage1_backend.map_or(usize::MAX, |b| b.max_parallelism()))
        .max(1);
    if threads == 1 {
        return jobs.iter().map(run_one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(run_one).collect()),
        Err(_) => jobs.iter().map(run_one).collect(),
    }
}

/// Stage-1 stand-in that answers every prompt with the searched target of
/// the training pair whose question it contains (the longest match wins).
/// Prompts matching no pair get prose, which parses to the default config.
pub fn oracle_stage1(pairs: &[TrainingPair]) -> FnBackend {
    let mut table: Vec<(String, String)> = pairs
        .iter()
        .map(|p| (p.input_text.clone(), p.rendered_target.clone()))
        .collect();
    table.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    FnBackend::new(move |request| {
        table
            .iter()
            .find(|(question, _)| request.prompt.contains(question.as_str()))
            .map_or_else(
                || "no config for this question".to_owned(),
                |(_, target)| target.clone(),
            )
    })
    .with_id("oracle-stage1")
}

pub fn write_traces(path: &Path, traces: &[HagTrace]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for trace in traces {
        writeln!(file, "{}", serde_json::to_string(trace)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<HagTrace>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{FnBackend, ScriptedBackend};
    use crate::space::{render_config_text, TOY_DEFAULT};
    use crate::tasks::{Reference, TaskKind};

    fn instance() -> TaskInstance {
        TaskInstance::new(
            TaskKind::Coinflip,
            "c1",
            "Is it heads up?",
            Reference::YesNo("yes".into()),
        )
        .unwrap()
    }

    fn response() -> ResponseSettings {
        ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 3, 16, 100)
    }

    fn selection() -> ConfigSelection {
        ConfigSelection::new(PromptTemplate::builtin(ModelFamily::Llama, 1), 0)
    }

    fn pair(i: usize) -> TrainingPair {
        let config = HyperparamConfig::new(0.1 + 0.1 * (i % 5) as f64, 0.9, 50, 1.0).unwrap();
        TrainingPair {
            task: TaskKind::Coinflip,
            instance_id: format!("d{i}"),
            input_text: format!("demo question {i}"),
            target_config: config,
            rendered_target: render_config_text(&config),
            best_score: 1.0,
            default_score: 0.0,
        }
    }

    #[test]
    fn builtin_templates_are_valid() {
        for family in [
            ModelFamily::Llama,
            ModelFamily::Mistral,
            ModelFamily::Vicuna,
            ModelFamily::Plain,
        ] {
            for stage in [1, 2] {
                let t = PromptTemplate::builtin(family, stage);
                assert!(!t.text.ends_with('\n'));
            }
        }
        let llama = PromptTemplate::builtin(ModelFamily::Llama, 1).render("Q");
        assert!(llama.contains("Please act as a hyperparameter selector"));
        assert!(llama.contains("Q [/INST]"));
        assert_eq!(PromptTemplate::builtin(ModelFamily::Plain, 2).render("Q"), "Q");
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplate::new(ModelFamily::Plain, 2, "no placeholder"),
            Err(Error::Template(_))
        ));
        assert!(PromptTemplate::new(ModelFamily::Plain, 2, "{user's question} {user's question}").is_err());
        assert!(PromptTemplate::new(ModelFamily::Plain, 1, "{user's question}").is_err());
        assert!(PromptTemplate::new(ModelFamily::Plain, 3, "{user's question}").is_err());
    }

    #[test]
    fn template_render_preserves_bytes() {
        let t = PromptTemplate::new(ModelFamily::Plain, 2, "a {user's question} b $ {x}").unwrap();
        assert_eq!(t.render("Q"), "a Q b $ {x}");
    }

    #[test]
    fn icl_prompt_shape() {
        let demos: Vec<_> = (0..100).map(pair).collect();
        let prompt = build_icl_prompt(&demos, "target?", 32).unwrap();
        let (before, after) = prompt.rsplit_once("Question: target?").unwrap();
        assert_eq!(before.lines().filter(|l| l.starts_with("Config: {")).count(), 32);
        assert_eq!(after, "\nConfig:");
        assert!(prompt.starts_with(ICL_HEADER));

        let one = build_icl_prompt(&demos, "q", 1).unwrap();
        assert_eq!(one.matches("Question: ").count(), 2);
        assert_eq!(
            build_icl_prompt(&demos[..2], "q", 2).unwrap(),
            build_icl_prompt(&demos[..2], "q", 2).unwrap()
        );
        assert!(build_icl_prompt(&demos[..3], "q", 4).is_err());
        assert!(build_icl_prompt(&demos, "q", 0).is_err());
    }

    #[test]
    fn hag_passes_parsed_config_to_stage_two() {
        let stage1 =
            ScriptedBackend::new(["{'temperature':0.6,'top_p':0.9,'top_k':50,'repetition_penalty':1.2}"]).unwrap();
        let stage2 = ScriptedBackend::new(["a", "b", "c"]).unwrap();
        let trace = run_hag(&instance(), &stage1, &stage2, HagMode::Sft, &selection(), &response()).unwrap();
        assert_eq!(trace.parse_status, ParseStatus::Ok);
        let want = HyperparamConfig::new(0.6, 0.9, 50, 1.2).unwrap();
        assert_eq!(trace.parsed_config, want);
        let requests = stage2.requests();
        assert_eq!(requests.len(), 3);
        assert!(requests.iter().all(|r| r.config == want));
        assert_eq!(requests.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![100, 101, 102]);
        assert_eq!(stage1.requests()[0].config, STAGE1_DECODE);
        assert_eq!(trace.stage2_outputs, vec!["a", "b", "c"]);
    }

    #[test]
    fn hag_falls_back_to_default() {
        let stage1 = ScriptedBackend::new(["I would rather not say."]).unwrap();
        let stage2 = ScriptedBackend::new(["x", "y", "z"]).unwrap();
        let trace = run_hag(&instance(), &stage1, &stage2, HagMode::Sft, &selection(), &response()).unwrap();
        assert_eq!(trace.parse_status, ParseStatus::Fallback);
        assert_eq!(trace.parsed_config, TOY_DEFAULT);
        assert!(stage2.requests().iter().all(|r| r.config == TOY_DEFAULT));
    }

    #[test]
    fn hag_error_keeps_partial_trace() {
        let stage1 =
            ScriptedBackend::new(["{'temperature':0.6,'top_p':0.9,'top_k':50,'repetition_penalty':1.2}"]).unwrap();
        let stage2 = ScriptedBackend::new(["only one"]).unwrap();
        let err = run_hag(&instance(), &stage1, &stage2, HagMode::Sft, &selection(), &response()).unwrap_err();
        assert!(matches!(err.source, Error::Harness(_)));
        assert_eq!(err.partial.stage2_outputs, vec!["only one"]);
        assert!(err.partial.error.is_some());
    }

    #[test]
    fn icl_mode_uses_demonstrations() {
        let demos: Vec<_> = (0..4).map(pair).collect();
        let stage1 =
            ScriptedBackend::new(["{'temperature': 0.3, 'top_p': 0.5, 'top_k': 10, 'repetition_penalty': 1.0}"])
                .unwrap();
        let stage2 = FnBackend::new(|_| "ok".into());
        let trace = run_hag(
            &instance(),
            &stage1,
            &stage2,
            HagMode::Icl {
                demonstrations: &demos,
                k: 2,
            },
            &selection(),
            &response(),
        )
        .unwrap();
        assert_eq!(trace.strategy, Strategy::HagIcl);
        assert_eq!(trace.stage1_prompt.unwrap().matches("Config: {").count(), 2);
    }

    #[test]
    fn baselines() {
        let backend = FnBackend::new(|_| "yes".into());
        let space = ConfigSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = run_baseline(&instance(), &backend, Strategy::Default, &space, &mut rng, &response()).unwrap();
        assert_eq!(t.parsed_config, TOY_DEFAULT);

        let a = run_baseline(
            &instance(),
            &backend,
            Strategy::Random,
            &space,
            &mut ChaCha8Rng::seed_from_u64(5),
            &response(),
        )
        .unwrap();
        let b = run_baseline(
            &instance(),
            &backend,
            Strategy::Random,
            &space,
            &mut ChaCha8Rng::seed_from_u64(5),
            &response(),
        )
        .unwrap();
        assert_eq!(a.parsed_config, b.parsed_config);
        assert!(space.contains(&a.parsed_config));
        assert!(run_baseline(&instance(), &backend, Strategy::HagSft, &space, &mut rng, &response()).is_err());
    }

    #[test]
    fn random_strategy_runs_five_replicates() {
        let backend = FnBackend::new(|_| "yes".into());
        let plan = RunPlan {
            strategy: Strategy::Random,
            backend: &backend,
            stage1_backend: None,
            selection: selection(),
            response: response(),
            space: ConfigSpace::default(),
            demonstrations: Vec::new(),
            icl_k: DEFAULT_ICL_K,
            parallelism: 4,
        };
        let instances = vec![instance()];
        let traces = run_strategy(&instances, &plan);
        assert_eq!(traces.len(), 5);
        let replicates: Vec<u32> = traces.iter().map(|t| t.replicate).collect();
        assert_eq!(replicates, vec![0, 1, 2, 3, 4]);
        assert_eq!(run_strategy(&instances, &plan), traces);
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("hag-icl".parse::<Strategy>().unwrap(), Strategy::HagIcl);
        assert!("beam".parse::<Strategy>().is_err());
    }
}

//! The two-stage protocol next to the Default and Random baselines. Stage 1
//! is played by a scripted config picker; any backend can take its place.
//!
//!     cargo run --release --example hag_pipeline

use std::path::PathBuf;

use hag::backends::{FnBackend, ToyBackend, ToyModel};
use hag::report::evaluate;
use hag::runner::{ConfigSelection, ModelFamily, PromptTemplate, ResponseSettings, RunPlan, Strategy};
use hag::space::ConfigSpace;
use hag::tasks::{load_instances, Scorer, TaskKind};

fn main() -> anyhow::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let backend = ToyBackend::new(ToyModel::train(
        &std::fs::read_to_string(data.join("corpus.txt"))?,
        4,
        0.1,
    )?);
    let instances = load_instances(&data.join("tasks/coinflip.jsonl"), Some(TaskKind::Coinflip))?;

    // proposes a hotter, narrower config for questions with many people in them
    let picker = FnBackend::new(|r| {
        let t = if r.prompt.matches("flip").count() > 4 { 1.5 } else { 1.1 };
        format!("{{'temperature': {t}, 'top_p': 0.5, 'top_k': 10, 'repetition_penalty': 1.1}}")
    })
    .with_id("heuristic-picker");

    let scorer = Scorer::new();
    for strategy in [Strategy::Default, Strategy::Random, Strategy::HagSft] {
        let plan = RunPlan {
            strategy,
            backend: &backend,
            stage1_backend: Some(&picker),
            selection: ConfigSelection::new(PromptTemplate::builtin(ModelFamily::Plain, 1), 0),
            response: ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 4, 32, 0),
            space: ConfigSpace::default(),
            demonstrations: vec![],
            icl_k: 1,
            parallelism: 4,
        };
        let (traces, result) = evaluate(&instances, &plan, &scorer)?;
        println!(
            "{:<8} score {:>6.2}  parse failures {:.0}%",
            strategy.title(),
            result.score.unwrap_or(f64::NAN) * 100.0,
            result.parse_failure_rate * 100.0
        );
        let t = &traces[0];
        println!("         e.g. {} -> {:?}", t.parsed_config, t.stage2_outputs[0]);
    }
    Ok(())
}

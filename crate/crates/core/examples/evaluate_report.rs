//! Builds a report bundle (markdown, CSV, JSON) from scored runs and an
//! upper bound, all on the toy backend.
//!
//!     cargo run --release --example evaluate_report [out-dir]

use std::path::PathBuf;

use hag::backends::{Backend, ToyBackend, ToyModel};
use hag::report::{evaluate, render_markdown, write_report, EvalReport, Manifest, UpperBoundEntry};
use hag::runner::{oracle_stage1, ConfigSelection, ModelFamily, PromptTemplate, ResponseSettings, RunPlan, Strategy};
use hag::search::{assign_targets, upper_bound, Evaluator};
use hag::space::ConfigSpace;
use hag::tasks::{load_instances, Scorer, TaskKind};

fn main() -> anyhow::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let backend = ToyBackend::new(ToyModel::train(
        &std::fs::read_to_string(data.join("corpus.txt"))?,
        4,
        0.1,
    )?);
    let scorer = Scorer::new();
    let response = ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 3, 32, 0);
    let candidates = ConfigSpace::from_file(&data.join("space-small.json"))?.enumerate();

    let mut results = Vec::new();
    let mut upper_bounds = Vec::new();
    for task in [TaskKind::Coinflip, TaskKind::Taboo] {
        let instances = load_instances(&data.join(format!("tasks/{}.jsonl", task.name())), Some(task))?;
        let evaluator = Evaluator::new(&backend, &scorer, response.clone()).with_parallelism(4);
        let ub = upper_bound(&candidates, &instances, &evaluator)?;
        upper_bounds.push(UpperBoundEntry {
            task,
            model: backend.id().to_owned(),
            score: ub.score,
        });
        // an oracle picker that already knows each instance's best config
        let oracle = oracle_stage1(&assign_targets(
            &candidates,
            &instances,
            &evaluator,
            backend.default_config(),
        )?);
        for strategy in [Strategy::Random, Strategy::Default, Strategy::HagSft] {
            let plan = RunPlan {
                strategy,
                backend: &backend,
                stage1_backend: Some(&oracle),
                selection: ConfigSelection::new(PromptTemplate::builtin(ModelFamily::Plain, 1), 0),
                response: response.clone(),
                space: ConfigSpace::default(),
                demonstrations: vec![],
                icl_k: 1,
                parallelism: 4,
            };
            results.push(evaluate(&instances, &plan, &scorer)?.1);
        }
    }
    let report = EvalReport::new(Manifest::default(), results, upper_bounds);
    println!("{}", render_markdown(&report));
    for rc in report.relative_changes() {
        println!("{rc:?}");
    }
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hag-report"));
    write_report(&out, &report)?;
    println!("wrote {}", out.display());
    Ok(())
}

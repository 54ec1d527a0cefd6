//! Prune + greedy search on the toy backend, producing per-instance target
//! configs and the instruction/config training pairs.
//!
//!     cargo run --release --example search_targets [out.jsonl]

use std::collections::BTreeMap;
use std::path::PathBuf;

use hag::backends::{Backend, ToyBackend, ToyModel};
use hag::runner::{ModelFamily, PromptTemplate, ResponseSettings};
use hag::search::{run_search, write_pairs_jsonl, yield_report, Evaluator, SearchPlan};
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
    let configs = ConfigSpace::from_file(&data.join("space-small.json"))?.enumerate();

    // a threshold the toy model can reach (display units: percent correct)
    let plan = SearchPlan {
        greedy_keep: 5,
        thresholds: BTreeMap::from([(TaskKind::Coinflip, Some(20.0))]),
        ..SearchPlan::default()
    };
    let settings = ResponseSettings::new(PromptTemplate::builtin(ModelFamily::Plain, 2), 4, 32, 0);
    let scorer = Scorer::new();
    let evaluator = Evaluator::new(&backend, &scorer, settings).with_parallelism(4);
    let outcome = run_search(&configs, &instances, &plan, &evaluator, backend.default_config())?;

    println!(
        "{} configs, {} pruned below {:.2}, {} kept after the greedy stage",
        outcome.space_size,
        outcome.pruned,
        plan.raw_threshold(TaskKind::Coinflip),
        outcome.candidates.len()
    );
    for pair in outcome.pairs.iter().take(5) {
        println!(
            "{:>5}: {} (best {:.2}, default {:.2})",
            pair.instance_id, pair.rendered_target, pair.best_score, pair.default_score
        );
    }
    let yields = yield_report(&outcome.pairs)?;
    let y = &yields.tasks[0];
    println!(
        "mean best {:.3} vs default {:.3}; {} backend calls",
        y.mean_best,
        y.mean_default,
        evaluator.backend_evaluations()
    );

    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pairs-coinflip.jsonl"));
    write_pairs_jsonl(&out, &outcome.pairs)?;
    println!("wrote {}", out.display());
    Ok(())
}

//! Scores hand-written responses for each of the six tasks.
//!
//!     cargo run --example score_tasks

use std::path::PathBuf;

use hag::tasks::{load_instances, Dictionary, Scorer, TaskKind};

fn main() -> anyhow::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let scorer = Scorer::with_dictionary(Dictionary::from_file(&data.join("dictionary.txt"))?);
    let responses: [(TaskKind, &[&str]); 6] = [
        (TaskKind::Coinflip, &["One flip, so no.", "Yes, it is still heads up."]),
        (TaskKind::SpellingBee, &["reading grained", "grained grained dog"]),
        (
            TaskKind::Ynbw,
            &["Usually, it matches fresh milk.", "White, obviously."],
        ),
        (
            TaskKind::Taboo,
            &["A vast salty expanse under the sky.", "Blue water, wave after wave."],
        ),
        (
            TaskKind::PigLatin,
            &["ellowyay ousehay eengray oldway", "ellowyay house green old"],
        ),
        (TaskKind::Multiarith, &["13 + 4 * 4 = 29", "I think 17"]),
    ];
    for (task, candidates) in responses {
        let instance = &load_instances(&data.join(format!("tasks/{}.jsonl", task.name())), Some(task))?[0];
        println!("{} [{}]: {}", task.title(), instance.id, instance.input);
        for response in candidates {
            let score = scorer.score(instance, response)?;
            println!("  {:>8.3}  {response:?}", score.value);
        }
    }
    Ok(())
}
